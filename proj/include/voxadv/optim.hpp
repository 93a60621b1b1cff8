#pragma once

#include <cstdint>

#include "voxadv/config.hpp"
#include "voxadv/params.hpp"

namespace voxadv {

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::sgd;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-ParamSet optimiser memory: heavy-ball velocity, or Adam first/second moments.
template <typename T>
struct OptimizerSlot {
    ParamSet<T> first;
    ParamSet<T> second;
    std::int64_t steps = 0;

    static OptimizerSlot for_params(const ParamSet<T>& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

/// SGD: v = mu v + (g + wd p); p -= lr v.
/// Adam: bias-corrected moments; p -= lr m_hat / (sqrt(v_hat) + eps), decay added to g.
template <typename T>
void optimizer_step(const OptimizerSettings& s, double lr, ParamSet<T>& params, const ParamSet<T>& grads, OptimizerSlot<T>& slot);

/// Step decay: lr0 * factor^floor(iteration / step).
double lr_at(std::int64_t iteration, double lr0, std::int64_t step, double factor = 0.1);
double lr_at(std::int64_t iteration, const TrainConfig& cfg);

}  // namespace voxadv
