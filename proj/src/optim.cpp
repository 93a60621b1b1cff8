#include "voxadv/optim.hpp"

#include <cmath>

namespace voxadv {

template <typename T>
void optimizer_step(const OptimizerSettings& s, double lr, ParamSet<T>& params, const ParamSet<T>& grads, OptimizerSlot<T>& slot) {
    params.require_layout(grads, "optimizer_step");
    params.require_layout(slot.first, "optimizer_step");
    ++slot.steps;
    if (s.kind == OptimizerKind::sgd) {
        const T mu = static_cast<T>(s.momentum), wd = static_cast<T>(s.weight_decay), rate = static_cast<T>(lr);
        for (std::size_t i = 0; i < params.size(); ++i) {
            T* p = params.data(i);
            const T* g = grads.data(i);
            T* v = slot.first.data(i);
            const std::size_t n = params[i].values.size();
            for (std::size_t k = 0; k < n; ++k) {
                v[k] = mu * v[k] + (g[k] + wd * p[k]);
                p[k] -= rate * v[k];
            }
        }
        return;
    }
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(slot.steps));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(slot.steps));
    const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2), wd = static_cast<T>(s.weight_decay);
    const T step = static_cast<T>(lr / bc1), inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2)), eps = static_cast<T>(s.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        T* p = params.data(i);
        const T* g = grads.data(i);
        T* m = slot.first.data(i);
        T* v = slot.second.data(i);
        const std::size_t n = params[i].values.size();
        for (std::size_t k = 0; k < n; ++k) {
            const T gk = g[k] + wd * p[k];
            m[k] = b1 * m[k] + (T(1) - b1) * gk;
            v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
            p[k] -= step * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
        }
    }
}

double lr_at(std::int64_t iteration, double lr0, std::int64_t step, double factor) {
    if (iteration < 0) iteration = 0;
    return lr0 * std::pow(factor, static_cast<double>(iteration / step));
}

double lr_at(std::int64_t iteration, const TrainConfig& cfg) { return lr_at(iteration, cfg.lr, cfg.lr_decay_step, cfg.lr_decay_factor); }

template void optimizer_step(const OptimizerSettings&, double, ParamSet<float>&, const ParamSet<float>&, OptimizerSlot<float>&);
template void optimizer_step(const OptimizerSettings&, double, ParamSet<double>&, const ParamSet<double>&, OptimizerSlot<double>&);

}  // namespace voxadv
