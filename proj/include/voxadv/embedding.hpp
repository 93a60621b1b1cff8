#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxadv/backbone.hpp"
#include "voxadv/data.hpp"
#include "voxadv/fusion.hpp"

namespace voxadv {

/// Sampled fused student features, one row per voxel.
struct EmbeddingDump {
    Matrix<double> features;
    std::vector<int> class_ids;
    std::vector<Domain> domains;
    std::vector<std::string> case_ids;

    [[nodiscard]] std::size_t size() const { return class_ids.size(); }
};

/// Up to n_per_class voxels per class from each labeled and unlabeled train
/// case. Class tags come from ground truth and are used for display only.
/// Classes absent from a case are skipped and reported in `warnings`.
EmbeddingDump collect_embeddings(const BackboneParams<float>& student, const FusionParams<float>& fusion,
                                 const DatasetManifest& m, Preset preset, int n_per_class, std::uint64_t seed,
                                 std::vector<std::string>* warnings = nullptr);

/// Two leading principal axes. Each axis is signed so its first nonzero loading is positive.
struct Projection2D {
    std::vector<double> mean;
    std::array<std::vector<double>, 2> axes;
    std::array<double, 2> variance{};
};

Projection2D fit_pca_2d(const Matrix<double>& x);
Matrix<double> project(const Projection2D& p, const Matrix<double>& x);

/// Between-class over within-class scatter, trace(S_b) / trace(S_w).
double fisher_score(const Matrix<double>& x, const std::vector<int>& labels);

/// Labeled points drawn as triangles, unlabeled as circles, coloured by class.
std::string scatter_svg(const Matrix<double>& coords, const std::vector<int>& classes, const std::vector<Domain>& domains,
                        const std::string& title);

/// Columns: case, domain, class, pc1, pc2, f0 .. f{C-1}.
void write_embedding_csv(const std::filesystem::path& path, const EmbeddingDump& d, const Matrix<double>& coords);
EmbeddingDump read_embedding_csv(const std::filesystem::path& path);

}  // namespace voxadv
