#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "voxadv/nn/ops.hpp"
#include "voxadv/params.hpp"
#include "voxadv/types.hpp"

namespace voxadv {

/// Learnable weights of the four-level residual encoder-decoder.
///
/// Level j (1..4) of the encoder carries base_channels * 2^(j-1) channels at
/// 1/2^(j-1) of the input extent; each level output is one pyramid tap.
/// Parameter count is 3507*c^2 + 113*c + K*(c+1) for c = base_channels.
template <typename T>
struct BackboneParams {
    int base_channels = 0;
    int num_classes = 0;
    ParamSet<T> weights;

    template <typename U>
    [[nodiscard]] BackboneParams<U> cast() const {
        return {base_channels, num_classes, weights.template cast<U>()};
    }
};

std::size_t backbone_param_count(int base_channels, int num_classes);

template <typename T>
BackboneParams<T> init_backbone(std::uint64_t seed, int base_channels, int num_classes);

template <typename T>
struct BackboneOutput {
    SoftPrediction<T> prediction;
    FeaturePyramid<T> pyramid;
};

/// Activations retained by a training forward pass.
template <typename T>
struct BackboneTape;

/// Throws ShapeError naming the first axis not divisible by 8.
void check_backbone_extent(const Extent3& e);

template <typename T>
BackboneOutput<T> backbone_forward(const BackboneParams<T>& params, const Tensor<T>& x, BackboneTape<T>* tape = nullptr);

template <typename T>
BackboneOutput<T> backbone_forward(const BackboneParams<T>& params, const Volume& x) {
    return backbone_forward(params, x.voxels.template cast<T>());
}

/// Accumulates parameter gradients into `grads` given upstream gradients with
/// respect to the output probabilities and/or the pyramid taps. Either may be
/// absent (null pointers).
template <typename T>
void backbone_backward(const BackboneParams<T>& params, const BackboneTape<T>& tape, const Tensor<T>* dprobs,
                       const std::array<const Tensor<T>*, 4>& dpyramid, ParamSet<T>& grads);

template <typename T>
struct BackboneTape {
    struct Block {
        Tensor<T> input;    // conv input
        nn::NormCache<T> norm;
        Tensor<T> output;   // rectified output
    };
    // enc1, down1, enc2, down2, enc3, down3, enc4, up3, dec3, up2, dec2, up1, dec1
    std::array<Block, 13> blocks;
    Tensor<T> head_input;
    Tensor<T> probs;
};

}  // namespace voxadv
