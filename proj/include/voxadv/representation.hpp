#pragma once

#include <cstdint>

#include "voxadv/nn/mlp.hpp"
#include "voxadv/params.hpp"
#include "voxadv/voxel_batch.hpp"

namespace voxadv {

/// Projection and prediction MLPs (linear, rectifier, linear). The student
/// owns projection + prediction; the teacher projection is an EMA shadow of
/// the student projection and never receives gradients.
template <typename T>
struct RepresentationHeads {
    int input_width = 64;
    int width = 64;
    ParamSet<T> student_projection;
    ParamSet<T> student_prediction;
    ParamSet<T> teacher_projection;

    [[nodiscard]] nn::MlpLayout projection_layout() const;
    [[nodiscard]] nn::MlpLayout prediction_layout() const;
};

template <typename T>
RepresentationHeads<T> init_representation_heads(std::uint64_t seed, int input_width, int width = 64);

inline constexpr double kNormalizeEps = 1e-12;


/// mean_i || p_i/(|p_i|+eps) - z_i/(|z_i|+eps) ||^2. Throws ShapeError on count or width mismatch.
template <typename T>
double feature_loss(const Matrix<T>& student, const Matrix<T>& teacher);

/// Gradient of feature_loss with respect to the student rows. The teacher side is a constant.
template <typename T>
Matrix<T> feature_loss_grad(const Matrix<T>& student, const Matrix<T>& teacher);

template <typename T>
struct RepresentationTape {
    nn::MlpCache<T> projection;
    nn::MlpCache<T> prediction;
};

template <typename T>
struct RepresentationOutput {
    Matrix<T> student;  // p(z_s)
    Matrix<T> teacher;  // z_t
};

/// Student path: projection then prediction; teacher path: teacher projection.
/// Batches must be position-aligned (same voxel and class per row) or an
/// alignment DomainError is thrown.
template <typename T>
RepresentationOutput<T> representation_forward(const RepresentationHeads<T>& heads, const VoxelFeatureBatch<T>& student_batch,
                                               const VoxelFeatureBatch<T>& teacher_batch, RepresentationTape<T>* tape = nullptr);

/// Gradients of a loss with respect to p(z_s) flow into student projection /
/// prediction grads and back to the student feature rows.
template <typename T>
void representation_backward(const RepresentationHeads<T>& heads, const RepresentationTape<T>& tape,
                             const Matrix<T>& dstudent, ParamSet<T>& projection_grads, ParamSet<T>& prediction_grads,
                             Matrix<T>* dfeatures);

}  // namespace voxadv
