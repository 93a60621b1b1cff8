#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "voxadv/rng.hpp"
#include "voxadv/tensor.hpp"
#include "voxadv/types.hpp"

namespace voxadv::testing {

template <typename T>
Tensor<T> random_tensor(int channels, Extent3 e, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor<T> t(channels, e);
    for (auto& v : t.values()) v = static_cast<T>(scale * rng.normal());
    return t;
}

template <typename T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Matrix<T> m(rows, cols);
    for (auto& v : m.values()) v = static_cast<T>(scale * rng.normal());
    return m;
}

inline LabelMask random_mask(Extent3 e, int k, std::uint64_t seed) {
    Rng rng(seed);
    LabelMask m(e, k);
    for (auto& l : m.labels) l = static_cast<std::uint8_t>(rng.index(static_cast<std::uint64_t>(k)));
    return m;
}

/// Random softmax-normalised prediction.
template <typename T>
SoftPrediction<T> random_prediction(int k, Extent3 e, std::uint64_t seed) {
    Tensor<T> logits = random_tensor<T>(k, e, seed);
    SoftPrediction<T> p{Tensor<T>(k, e)};
    for (std::size_t v = 0; v < e.voxels(); ++v) {
        double z = 0.0;
        for (int c = 0; c < k; ++c) z += std::exp(static_cast<double>(logits.at(c, v)));
        for (int c = 0; c < k; ++c) p.probs.at(c, v) = static_cast<T>(std::exp(static_cast<double>(logits.at(c, v))) / z);
    }
    return p;
}

/// Central differences of f over every entry of `x`.
inline std::vector<double> numeric_gradient(std::vector<double>& x, const std::function<double()>& f, double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

template <typename Span>
std::vector<double> to_vector(const Span& s) {
    return std::vector<double>(s.begin(), s.end());
}

}  // namespace voxadv::testing
