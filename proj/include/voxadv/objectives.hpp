#pragma once

#include <cstdint>
#include <string>

#include "voxadv/types.hpp"

namespace voxadv {

inline constexpr double kDiceEps = 1e-5;

/// 1 - mean over all K classes of (2 sum p g + eps) / (sum p^2 + sum g^2 + eps).
template <typename T>
double dice_loss(const SoftPrediction<T>& pred, const LabelMask& gt);

/// d dice_loss / d pred.
template <typename T>
Tensor<T> dice_loss_grad(const SoftPrediction<T>& pred, const LabelMask& gt);

/// Mean squared difference over all K*H*W*D entries.
template <typename T>
double consistency_loss(const SoftPrediction<T>& teacher, const SoftPrediction<T>& student);

/// d consistency_loss / d student; the teacher is a constant.
template <typename T>
Tensor<T> consistency_loss_grad(const SoftPrediction<T>& teacher, const SoftPrediction<T>& student);

/// Gaussian warm-up gamma(t) = gamma_max * exp(-5 (1 - t/t_max)^2); t is clamped to [0, t_max].
double consistency_weight(std::int64_t t, std::int64_t t_max, double gamma_max = 0.001);

struct LossParts {
    double adversarial = 0.0;
    double feature = 0.0;
    double consistency = 0.0;
    double dice = 0.0;
};

struct LossReport {
    std::int64_t iteration = 0;
    double lr = 0.0;
    double dice = 0.0;
    double consistency = 0.0;
    double adversarial = 0.0;
    double feature = 0.0;
    double total = 0.0;
    double gamma_t = 0.0;
    double valid_pseudo_fraction = 0.0;

    friend bool operator==(const LossReport&, const LossReport&) = default;
};

/// total = alpha*adv + beta*feature + gamma_t*consistency + dice. Throws
/// DomainError naming the first non-finite part.
LossReport total_loss(const LossParts& parts, double alpha, double beta, double gamma_t);

/// Training-log CSV schema.
std::string loss_csv_header();
std::string loss_csv_row(const LossReport& r);
/// Parses a row produced by loss_csv_row.
LossReport parse_loss_csv_row(const std::string& line);

}  // namespace voxadv
