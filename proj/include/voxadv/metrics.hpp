#pragma once

#include <optional>
#include <string>
#include <vector>

#include "voxadv/types.hpp"

namespace voxadv {

/// 2|A∩B| / (|A|+|B|) over voxels of class c; 1 when both are empty.
double dsc(const LabelMask& a, const LabelMask& b, int c);
/// |A∩B| / |A∪B|; 1 when both are empty.
double jaccard(const LabelMask& a, const LabelMask& b, int c);

/// Class-c voxels with at least one 6-neighbour outside the class or outside the volume.
std::vector<std::size_t> surface_voxels(const LabelMask& m, int c);

/// Linear interpolation between order statistics at rank q*(n-1). `values` must be non-empty.
double percentile(std::vector<double> values, double q);

/// Nearest-surface distances from every surface voxel of A to the surface of B
/// (in spacing units), followed by those from B to A. Empty when either surface is.
std::vector<double> pooled_surface_distances(const LabelMask& a, const LabelMask& b, int c, const Spacing& spacing);

/// 95th percentile of the pooled directed surface distances; nullopt if a surface is empty.
std::optional<double> hd95(const LabelMask& a, const LabelMask& b, int c, const Spacing& spacing = {});
/// Mean of the two directed average surface distances; nullopt if a surface is empty.
std::optional<double> assd(const LabelMask& a, const LabelMask& b, int c, const Spacing& spacing = {});

enum class DistanceUnit { voxel, mm };

struct ClassMetrics {
    double dsc = 0.0;      // percent
    double jaccard = 0.0;  // percent
    std::optional<double> hd95;
    std::optional<double> assd;
};

/// Per-class metrics for classes 1..K-1 and their mean (background excluded).
struct MetricReport {
    DistanceUnit unit = DistanceUnit::voxel;
    std::vector<ClassMetrics> per_class;  // index 0 is class 1
    ClassMetrics mean;
};

MetricReport evaluate_case(const LabelMask& prediction, const LabelMask& truth, const Spacing& spacing, DistanceUnit unit);

}  // namespace voxadv
