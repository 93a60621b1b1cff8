#pragma once

#include <string>
#include <vector>

#include "voxadv/backbone.hpp"
#include "voxadv/data.hpp"
#include "voxadv/metrics.hpp"

namespace voxadv {

struct CaseEvaluation {
    std::string case_id;
    MetricReport report;
};

struct Evaluation {
    int num_classes = 2;
    DistanceUnit unit = DistanceUnit::voxel;
    std::vector<CaseEvaluation> cases;
    /// Case average per class; undefined distances are left out of the average.
    MetricReport mean;
};

Evaluation summarize(std::vector<CaseEvaluation> cases, int num_classes, DistanceUnit unit);

/// Student-only inference over every case of `split`.
Evaluation evaluate_split(const BackboneParams<float>& student, const DatasetManifest& m, Preset preset, DistanceUnit unit,
                          Split split = Split::test);

/// Columns: case, dice, jaccard, hd95, assd (class means, percent / distance
/// unit); for K > 2 also dice_1 .. dice_{K-1}. The last row is `mean`.
/// Undefined distances are written as NA.
std::string evaluation_csv(const Evaluation& e);

}  // namespace voxadv
