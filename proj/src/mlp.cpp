#include "voxadv/nn/mlp.hpp"

#include <Eigen/Core>
#include <cmath>

namespace voxadv::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMapR = Eigen::Map<const RowMat<T>>;

template <typename T>
void activate(Activation a, Matrix<T>& m) {
    for (T& v : m.values()) {
        if (v < T(0)) v = a == Activation::relu ? T(0) : static_cast<T>(kLeakySlope) * v;
    }
}

template <typename T>
void activate_backward(Activation a, const Matrix<T>& out, Matrix<T>& g) {
    const T* o = out.data();
    T* d = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(o[i] > T(0))) d[i] = a == Activation::relu ? T(0) : static_cast<T>(kLeakySlope) * d[i];
    }
}

}  // namespace

// Operands are copied into Eigen-owned storage so every product sees the same
// alignment; mapped std::vector memory made results vary in the last bit.
template <typename T>
void linear_forward(const Matrix<T>& x, const T* w, const T* b, std::size_t out, Matrix<T>& y) {
    const std::size_t n = x.rows(), in = x.cols();
    y = Matrix<T>(n, out);
    if (n == 0) return;
    const RowMat<T> X = CMapR<T>(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
    const RowMat<T> W = CMapR<T>(w, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    RowMat<T> Y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
    Y.noalias() = X * W.transpose();
    T* dst = y.data();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < out; ++c)
            dst[r * out + c] = Y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) + (b != nullptr ? b[c] : T(0));
}

template <typename T>
void linear_backward(const Matrix<T>& x, const T* w, const Matrix<T>& dy, T* dw, T* db, Matrix<T>* dx) {
    const std::size_t n = x.rows(), in = x.cols(), out = dy.cols();
    if (dx != nullptr) *dx = Matrix<T>(n, in);
    if (n == 0) return;
    const RowMat<T> G = CMapR<T>(dy.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
    if (dw != nullptr) {
        const RowMat<T> X = CMapR<T>(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
        RowMat<T> DW(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        DW.noalias() = G.transpose() * X;
        for (std::size_t r = 0; r < out; ++r)
            for (std::size_t c = 0; c < in; ++c) dw[r * in + c] += DW(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
    if (db != nullptr) {
        const T* g = dy.data();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < out; ++c) db[c] += g[r * out + c];
    }
    if (dx != nullptr) {
        const RowMat<T> W = CMapR<T>(w, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        RowMat<T> DX(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
        DX.noalias() = G * W;
        std::copy(DX.data(), DX.data() + DX.size(), dx->data());
    }
}

template <typename T>
std::size_t add_mlp_params(ParamSet<T>& ps, const MlpLayout& layout, Rng& rng) {
    const std::size_t first = ps.size();
    const double gain = layout.activation == Activation::relu ? 2.0 : 2.0 / (1.0 + kLeakySlope * kLeakySlope);
    for (std::size_t l = 0; l < layout.layers(); ++l) {
        const std::size_t in = layout.widths[l], out = layout.widths[l + 1];
        const std::string name = layout.prefix + std::to_string(l);
        const std::size_t wi = ps.add(name + ".w", {out, in});
        const double std_dev = std::sqrt(gain / static_cast<double>(in));
        for (T& v : ps[wi].values) v = static_cast<T>(rng.normal() * std_dev);
        ps.add(name + ".b", {out});
    }
    return first;
}

template <typename T>
Matrix<T> mlp_forward(const ParamSet<T>& ps, std::size_t first, const MlpLayout& layout, const Matrix<T>& x,
                      MlpCache<T>* cache) {
    if (cache != nullptr) {
        cache->inputs.clear();
        cache->outputs.clear();
    }
    Matrix<T> cur = x;
    for (std::size_t l = 0; l < layout.layers(); ++l) {
        Matrix<T> y;
        linear_forward(cur, ps.data(first + 2 * l), ps.data(first + 2 * l + 1), layout.widths[l + 1], y);
        if (l + 1 < layout.layers() || layout.activate_last) activate(layout.activation, y);
        if (cache != nullptr) {
            cache->inputs.push_back(std::move(cur));
            cache->outputs.push_back(y);
        }
        cur = std::move(y);
    }
    return cur;
}

template <typename T>
void mlp_backward(const ParamSet<T>& ps, std::size_t first, const MlpLayout& layout, const MlpCache<T>& cache,
                  const Matrix<T>& dy, ParamSet<T>* grads, Matrix<T>* dx) {
    Matrix<T> g = dy;
    for (std::size_t l = layout.layers(); l-- > 0;) {
        if (l + 1 < layout.layers() || layout.activate_last) activate_backward(layout.activation, cache.outputs[l], g);
        T* dw = grads != nullptr ? grads->data(first + 2 * l) : nullptr;
        T* db = grads != nullptr ? grads->data(first + 2 * l + 1) : nullptr;
        Matrix<T> gin;
        const bool need_dx = l > 0 || dx != nullptr;
        linear_backward(cache.inputs[l], ps.data(first + 2 * l), g, dw, db, need_dx ? &gin : nullptr);
        if (l == 0) {
            if (dx != nullptr) *dx = std::move(gin);
        } else {
            g = std::move(gin);
        }
    }
}

#define VOXADV_INSTANTIATE(T)                                                                                       \
    template void linear_forward(const Matrix<T>&, const T*, const T*, std::size_t, Matrix<T>&);                     \
    template void linear_backward(const Matrix<T>&, const T*, const Matrix<T>&, T*, T*, Matrix<T>*);                 \
    template std::size_t add_mlp_params(ParamSet<T>&, const MlpLayout&, Rng&);                                       \
    template Matrix<T> mlp_forward(const ParamSet<T>&, std::size_t, const MlpLayout&, const Matrix<T>&, MlpCache<T>*); \
    template void mlp_backward(const ParamSet<T>&, std::size_t, const MlpLayout&, const MlpCache<T>&, const Matrix<T>&, \
                               ParamSet<T>*, Matrix<T>*);
VOXADV_INSTANTIATE(float)
VOXADV_INSTANTIATE(double)
#undef VOXADV_INSTANTIATE

}  // namespace voxadv::nn
