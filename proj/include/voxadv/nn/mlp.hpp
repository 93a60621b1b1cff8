#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "voxadv/params.hpp"
#include "voxadv/rng.hpp"
#include "voxadv/tensor.hpp"

namespace voxadv::nn {

enum class Activation { relu, leaky_relu };

inline constexpr double kLeakySlope = 0.2;

/// Stack of fully connected layers: widths[0] -> widths[1] -> ... Activation
/// sits between layers, and after the last one when activate_last is set.
struct MlpLayout {
    std::string prefix;
    std::vector<std::size_t> widths;
    Activation activation = Activation::relu;
    bool activate_last = false;

    [[nodiscard]] std::size_t layers() const { return widths.size() - 1; }
};

template <typename T>
struct MlpCache {
    std::vector<Matrix<T>> inputs;   // input of each layer
    std::vector<Matrix<T>> outputs;  // post-activation output of each layer
};

/// y = x W^T + b, W stored [out][in].
template <typename T>
void linear_forward(const Matrix<T>& x, const T* w, const T* b, std::size_t out, Matrix<T>& y);

/// dW += dy^T x, db += colsum(dy), dx = dy W. Any output pointer may be null.
template <typename T>
void linear_backward(const Matrix<T>& x, const T* w, const Matrix<T>& dy, T* dw, T* db, Matrix<T>* dx);

/// Registers weights (fan-in scaled normal) and zero biases; returns index of the first entry.
template <typename T>
std::size_t add_mlp_params(ParamSet<T>& ps, const MlpLayout& layout, Rng& rng);

template <typename T>
Matrix<T> mlp_forward(const ParamSet<T>& ps, std::size_t first, const MlpLayout& layout, const Matrix<T>& x,
                      MlpCache<T>* cache = nullptr);

template <typename T>
void mlp_backward(const ParamSet<T>& ps, std::size_t first, const MlpLayout& layout, const MlpCache<T>& cache,
                  const Matrix<T>& dy, ParamSet<T>* grads, Matrix<T>* dx);

}  // namespace voxadv::nn
