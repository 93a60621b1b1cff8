#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "voxadv/tensor.hpp"

namespace voxadv {

/// Physical voxel size in millimetres along (h, w, d).
struct Spacing {
    double h = 1.0;
    double w = 1.0;
    double d = 1.0;
    friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Single-channel intensity grid with physical spacing; the network input.
struct Volume {
    Tensor<float> voxels;  // 1 x h x w x d
    Spacing spacing;

    Volume() = default;
    Volume(Extent3 extent, Spacing s = {}, float fill = 0.0f) : voxels(1, extent, fill), spacing(s) {}

    [[nodiscard]] const Extent3& extent() const { return voxels.extent(); }
    float& operator()(int y, int x, int z) { return voxels(0, y, x, z); }
    float operator()(int y, int x, int z) const { return voxels(0, y, x, z); }

    /// Throws DomainError on non-finite voxels or non-positive spacing.
    void validate() const;
};

/// Per-voxel class ids with a validity mask. Ground-truth masks are valid everywhere.
struct LabelMask {
    Extent3 extent{};
    int num_classes = 2;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> valid;

    LabelMask() = default;
    LabelMask(Extent3 e, int k, std::uint8_t label = 0)
        : extent(e), num_classes(k), labels(e.voxels(), label), valid(e.voxels(), 1) {}

    std::uint8_t& operator()(int y, int x, int z) { return labels[extent.index(y, x, z)]; }
    std::uint8_t operator()(int y, int x, int z) const { return labels[extent.index(y, x, z)]; }

    [[nodiscard]] std::size_t valid_count() const;
    [[nodiscard]] bool all_valid() const { return valid_count() == labels.size(); }
    /// Throws DomainError if any label >= num_classes or sizes disagree.
    void validate() const;

    friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// K x h x w x d class probabilities.
template <typename T>
struct SoftPrediction {
    Tensor<T> probs;

    [[nodiscard]] int num_classes() const { return probs.channels(); }
    [[nodiscard]] const Extent3& extent() const { return probs.extent(); }
};

/// Largest deviation of a per-voxel channel sum from one, or of any value from [0, 1].
template <typename T>
double normalization_error(const SoftPrediction<T>& p);

/// Encoder taps ordered shallow to deep.
template <typename T>
struct FeaturePyramid {
    static constexpr int kLevels = 4;
    std::array<Tensor<T>, kLevels> levels;

    /// Checks level count invariants: non-decreasing channels, halving extents.
    void validate() const;
};

template <typename T>
SoftPrediction<T> one_hot_encode(const LabelMask& mask, int num_classes);

/// Per-voxel argmax; ties go to the lowest class index. Result is valid everywhere.
template <typename T>
LabelMask argmax_labels(const SoftPrediction<T>& pred);

}  // namespace voxadv
