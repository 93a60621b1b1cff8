#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "voxadv/params.hpp"
#include "voxadv/types.hpp"
#include "voxadv/voxel_batch.hpp"

namespace voxadv {

/// Per-level 1x1x1 projections to a common width plus the fusing 1x1x1 convolution.
template <typename T>
struct FusionParams {
    std::array<int, 4> level_channels{};
    int fused_channels = 64;
    ParamSet<T> weights;  // proj{j}.w [C][C_j], proj{j}.b [C], fuse.w [C][C], fuse.b [C]

    template <typename U>
    [[nodiscard]] FusionParams<U> cast() const {
        return {level_channels, fused_channels, weights.template cast<U>()};
    }
};

template <typename T>
FusionParams<T> init_fusion(std::uint64_t seed, const std::array<int, 4>& level_channels, int fused_channels);

/// Pyramid channel widths produced by a backbone with the given base width.
std::array<int, 4> pyramid_channels(int base_channels);

/// C x H x W x D fused grid at the level-1 extent.
template <typename T>
struct FusedFeatureGrid {
    Tensor<T> features;
};

/// Trilinear resize, half-pixel centres with edge clamping.
template <typename T>
Tensor<T> trilinear_resize(const Tensor<T>& in, const Extent3& target);

/// Full-grid path: project each level, upsample to level-1 extent, sum, fuse.
template <typename T>
FusedFeatureGrid<T> resize_and_fuse(const FeaturePyramid<T>& pyr, const FusionParams<T>& params);

template <typename T>
struct FusionTape {
    std::vector<std::size_t> positions;
    std::array<Matrix<T>, 4> interpolated;  // raw level features at each position
    Matrix<T> summed;                        // pre-fuse sum of projections
};

/// Sparse path: fused features only at `positions` (flat indices into the
/// level-1 extent). Equal to gathering resize_and_fuse at those voxels, since
/// projection and trilinear weights commute.
template <typename T>
Matrix<T> fuse_at(const FeaturePyramid<T>& pyr, const FusionParams<T>& params, const std::vector<std::size_t>& positions,
                  FusionTape<T>* tape = nullptr);

/// Accumulates fusion weight gradients and scatters feature gradients into
/// `dpyramid` (allocated on first use to the pyramid shapes).
template <typename T>
void fuse_at_backward(const FeaturePyramid<T>& pyr, const FusionParams<T>& params, const FusionTape<T>& tape,
                      const Matrix<T>& dfused, ParamSet<T>& grads, std::array<Tensor<T>, 4>& dpyramid);

struct VoxelSample {
    std::size_t voxel;
    int class_id;
};

/// For every class present among valid voxels, draws min(cap, available)
/// positions uniformly without replacement. Classes are visited in increasing
/// order; deterministic for a fixed seed.
std::vector<VoxelSample> sample_voxel_positions(const LabelMask& mask, int per_class_cap, std::uint64_t seed);

/// Samples positions from `mask` and looks up their columns in the fused grid.
template <typename T>
VoxelFeatureBatch<T> sample_voxel_features(const FusedFeatureGrid<T>& f, const LabelMask& mask, int per_class_cap,
                                           std::uint64_t seed, Domain domain = Domain::labeled, int source = 0);

}  // namespace voxadv
