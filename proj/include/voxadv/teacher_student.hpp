#pragma once

#include <cstdint>

#include "voxadv/backbone.hpp"
#include "voxadv/fusion.hpp"
#include "voxadv/representation.hpp"

namespace voxadv {

/// Student weights plus the teacher's EMA shadows of backbone, fusion and
/// projection. Only the student is touched by gradients.
template <typename T>
struct ModelPair {
    BackboneParams<T> student_backbone;
    BackboneParams<T> teacher_backbone;
    FusionParams<T> student_fusion;
    FusionParams<T> teacher_fusion;
    RepresentationHeads<T> heads;
};

/// Student initialised from `seed`; teacher starts as an exact copy.
template <typename T>
ModelPair<T> init_model_pair(std::uint64_t seed, int base_channels, int num_classes, int fused_channels, int head_width);

/// teacher <- lambda * teacher + (1 - lambda) * student, elementwise.
/// Throws DomainError for lambda outside [0,1) and ShapeError on layout mismatch.
template <typename T>
void ema_update(ParamSet<T>& teacher, const ParamSet<T>& student, double lambda);

/// Applies ema_update to every shadowed parameter set of the pair.
template <typename T>
void ema_update(ModelPair<T>& pair, double lambda);

/// Argmax labels; a voxel is valid only where its max probability is strictly above t.
template <typename T>
LabelMask pseudo_label(const SoftPrediction<T>& teacher_pred, double t);

}  // namespace voxadv
