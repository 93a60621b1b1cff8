#pragma once

#include <cstdint>
#include <vector>

#include "voxadv/nn/mlp.hpp"
#include "voxadv/params.hpp"
#include "voxadv/voxel_batch.hpp"

namespace voxadv {

/// Shared two-layer trunk (leaky rectifier, slope 0.2) followed by one linear
/// scalar branch per class. Vector i is scored by branch class_ids[i].
template <typename T>
struct DiscriminatorParams {
    int input_width = 64;
    int hidden_width = 64;
    int num_classes = 2;
    ParamSet<T> weights;  // trunk0.w/b, trunk1.w/b, branch.w [K][hidden], branch.b [K]

    [[nodiscard]] nn::MlpLayout trunk_layout() const;
    template <typename U>
    [[nodiscard]] DiscriminatorParams<U> cast() const {
        return {input_width, hidden_width, num_classes, weights.template cast<U>()};
    }
};

inline constexpr std::size_t kBranchW = 4;
inline constexpr std::size_t kBranchB = 5;
inline constexpr double kScoreEps = 1e-7;

template <typename T>
DiscriminatorParams<T> init_discriminator(std::uint64_t seed, int input_width, int num_classes, int hidden_width = 64);

template <typename T>
struct DiscriminatorTape {
    nn::MlpCache<T> trunk;
    Matrix<T> hidden;
    std::vector<int> class_ids;
    std::vector<double> scores;
};

/// Realness score in (0,1) per vector. Throws DomainError on class_id >= K
/// and on an empty batch.
template <typename T>
std::vector<double> discriminate(const DiscriminatorParams<T>& params, const VoxelFeatureBatch<T>& batch,
                                 DiscriminatorTape<T>* tape = nullptr);

/// Backpropagates dL/dscore. Parameter gradients go to `grads` (may be null
/// for a frozen discriminator); input gradients to `dinputs` (may be null).
template <typename T>
void discriminate_backward(const DiscriminatorParams<T>& params, const DiscriminatorTape<T>& tape,
                           const std::vector<double>& dscores, ParamSet<T>* grads, Matrix<T>* dinputs);

/// -[mean log s_real + mean log(1 - s_fake)] with scores clamped to [eps, 1-eps].
double discriminator_loss(const std::vector<double>& scores_labeled, const std::vector<double>& scores_unlabeled);
/// Gradients of discriminator_loss with respect to each score (zero where clamped).
void discriminator_loss_grad(const std::vector<double>& scores_labeled, const std::vector<double>& scores_unlabeled,
                             std::vector<double>& d_labeled, std::vector<double>& d_unlabeled);

/// Non-saturating generator loss -mean log s_fake.
double generator_adversarial_loss(const std::vector<double>& scores_unlabeled);
std::vector<double> generator_adversarial_loss_grad(const std::vector<double>& scores_unlabeled);

}  // namespace voxadv
