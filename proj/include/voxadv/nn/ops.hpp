#pragma once

// Dense 3D layer kernels with hand-written backward passes. Weights are laid
// out [out][in][taps]; tensors are channel-first with d fastest. All loops run
// in a fixed order so results are bitwise reproducible.

#include <algorithm>
#include <cmath>
#include <vector>

#include "voxadv/tensor.hpp"

namespace voxadv::nn {

// ---------------------------------------------------------------------------
// 3x3x3 convolution, stride 1, zero padding 1, no bias.

template <typename T>
void conv3_forward(const Tensor<T>& in, const T* w, int out_channels, Tensor<T>& out) {
    const Extent3 e = in.extent();
    const int cin = in.channels();
    out = Tensor<T>(out_channels, e);
    const int hw_stride = e.w * e.d;
    for (int o = 0; o < out_channels; ++o) {
        T* __restrict op = out.channel(o).data();
        for (int c = 0; c < cin; ++c) {
            const T* __restrict ip = in.channel(c).data();
            const T* wk = w + (static_cast<std::size_t>(o) * cin + c) * 27;
            for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                const int y0 = std::max(0, -dy), y1 = std::min(e.h, e.h - dy);
                for (int kx = 0; kx < 3; ++kx) {
                    const int dx = kx - 1;
                    const int x0 = std::max(0, -dx), x1 = std::min(e.w, e.w - dx);
                    for (int kz = 0; kz < 3; ++kz) {
                        const int dz = kz - 1;
                        const int z0 = std::max(0, -dz), z1 = std::min(e.d, e.d - dz);
                        const T wv = wk[ky * 9 + kx * 3 + kz];
                        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(dy) * hw_stride + dx * e.d + dz;
                        for (int y = y0; y < y1; ++y) {
                            for (int x = x0; x < x1; ++x) {
                                T* __restrict orow = op + static_cast<std::ptrdiff_t>(y) * hw_stride + x * e.d;
                                const T* __restrict irow = ip + static_cast<std::ptrdiff_t>(y) * hw_stride + x * e.d + shift;
                                for (int z = z0; z < z1; ++z) orow[z] += wv * irow[z];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// dW += sum_v dout[o][v] * in[c][v + offset]; din (if non-null) += W^T dout.
template <typename T>
void conv3_backward(const Tensor<T>& in, const T* w, const Tensor<T>& dout, T* dw, Tensor<T>* din) {
    const Extent3 e = in.extent();
    const int cin = in.channels();
    const int cout = dout.channels();
    const int hw_stride = e.w * e.d;
    if (din != nullptr && !(din->channels() == cin && din->extent() == e)) *din = Tensor<T>(cin, e);
    std::vector<T> acc(static_cast<std::size_t>(e.d));
    for (int o = 0; o < cout; ++o) {
        const T* __restrict gp = dout.channel(o).data();
        for (int c = 0; c < cin; ++c) {
            const T* __restrict ip = in.channel(c).data();
            T* __restrict dip = din != nullptr ? din->channel(c).data() : nullptr;
            const std::size_t wbase = (static_cast<std::size_t>(o) * cin + c) * 27;
            for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                const int y0 = std::max(0, -dy), y1 = std::min(e.h, e.h - dy);
                for (int kx = 0; kx < 3; ++kx) {
                    const int dx = kx - 1;
                    const int x0 = std::max(0, -dx), x1 = std::min(e.w, e.w - dx);
                    for (int kz = 0; kz < 3; ++kz) {
                        const int dz = kz - 1;
                        const int z0 = std::max(0, -dz), z1 = std::min(e.d, e.d - dz);
                        const std::size_t widx = wbase + ky * 9 + kx * 3 + kz;
                        const T wv = w[widx];
                        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(dy) * hw_stride + dx * e.d + dz;
                        std::fill(acc.begin(), acc.end(), T(0));
                        T* __restrict ap = acc.data();
                        for (int y = y0; y < y1; ++y) {
                            for (int x = x0; x < x1; ++x) {
                                const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(y) * hw_stride + x * e.d;
                                const T* __restrict grow = gp + base;
                                const T* __restrict irow = ip + base + shift;
                                for (int z = z0; z < z1; ++z) ap[z] += grow[z] * irow[z];
                                if (dip != nullptr) {
                                    T* __restrict drow = dip + base + shift;
                                    for (int z = z0; z < z1; ++z) drow[z] += wv * grow[z];
                                }
                            }
                        }
                        T sum = 0;
                        for (int z = z0; z < z1; ++z) sum += ap[z];
                        dw[widx] += sum;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 2x2x2 convolution, stride 2 (downsampling), no bias.

template <typename T>
void down_forward(const Tensor<T>& in, const T* w, int out_channels, Tensor<T>& out) {
    const Extent3 e = in.extent();
    const Extent3 eo = e.halved();
    const int cin = in.channels();
    out = Tensor<T>(out_channels, eo);
    for (int o = 0; o < out_channels; ++o) {
        T* op = out.channel(o).data();
        for (int c = 0; c < cin; ++c) {
            const T* ip = in.channel(c).data();
            const T* wk = w + (static_cast<std::size_t>(o) * cin + c) * 8;
            for (int y = 0; y < eo.h; ++y)
                for (int x = 0; x < eo.w; ++x) {
                    T* orow = op + eo.index(y, x, 0);
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx) {
                            const T* irow = ip + e.index(2 * y + ky, 2 * x + kx, 0);
                            const T w0 = wk[ky * 4 + kx * 2], w1 = wk[ky * 4 + kx * 2 + 1];
                            for (int z = 0; z < eo.d; ++z) orow[z] += w0 * irow[2 * z] + w1 * irow[2 * z + 1];
                        }
                }
        }
    }
}

template <typename T>
void down_backward(const Tensor<T>& in, const T* w, const Tensor<T>& dout, T* dw, Tensor<T>* din) {
    const Extent3 e = in.extent();
    const Extent3 eo = dout.extent();
    const int cin = in.channels();
    const int cout = dout.channels();
    if (din != nullptr && !(din->channels() == cin && din->extent() == e)) *din = Tensor<T>(cin, e);
    for (int o = 0; o < cout; ++o) {
        const T* gp = dout.channel(o).data();
        for (int c = 0; c < cin; ++c) {
            const T* ip = in.channel(c).data();
            T* dip = din != nullptr ? din->channel(c).data() : nullptr;
            const std::size_t wbase = (static_cast<std::size_t>(o) * cin + c) * 8;
            T acc[8] = {};
            for (int y = 0; y < eo.h; ++y)
                for (int x = 0; x < eo.w; ++x) {
                    const T* grow = gp + eo.index(y, x, 0);
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx) {
                            const std::size_t ib = e.index(2 * y + ky, 2 * x + kx, 0);
                            const T* irow = ip + ib;
                            const int t = ky * 4 + kx * 2;
                            T a0 = 0, a1 = 0;
                            for (int z = 0; z < eo.d; ++z) {
                                a0 += grow[z] * irow[2 * z];
                                a1 += grow[z] * irow[2 * z + 1];
                            }
                            acc[t] += a0;
                            acc[t + 1] += a1;
                            if (dip != nullptr) {
                                T* drow = dip + ib;
                                const T w0 = w[wbase + t], w1 = w[wbase + t + 1];
                                for (int z = 0; z < eo.d; ++z) {
                                    drow[2 * z] += w0 * grow[z];
                                    drow[2 * z + 1] += w1 * grow[z];
                                }
                            }
                        }
                }
            for (int t = 0; t < 8; ++t) dw[wbase + t] += acc[t];
        }
    }
}

// ---------------------------------------------------------------------------
// 2x2x2 transposed convolution, stride 2 (upsampling), no bias.

template <typename T>
void up_forward(const Tensor<T>& in, const T* w, int out_channels, Tensor<T>& out) {
    const Extent3 e = in.extent();
    const Extent3 eo = e.doubled();
    const int cin = in.channels();
    out = Tensor<T>(out_channels, eo);
    for (int o = 0; o < out_channels; ++o) {
        T* op = out.channel(o).data();
        for (int c = 0; c < cin; ++c) {
            const T* ip = in.channel(c).data();
            const T* wk = w + (static_cast<std::size_t>(o) * cin + c) * 8;
            for (int y = 0; y < e.h; ++y)
                for (int x = 0; x < e.w; ++x) {
                    const T* irow = ip + e.index(y, x, 0);
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx) {
                            T* orow = op + eo.index(2 * y + ky, 2 * x + kx, 0);
                            const T w0 = wk[ky * 4 + kx * 2], w1 = wk[ky * 4 + kx * 2 + 1];
                            for (int z = 0; z < e.d; ++z) {
                                orow[2 * z] += w0 * irow[z];
                                orow[2 * z + 1] += w1 * irow[z];
                            }
                        }
                }
        }
    }
}

template <typename T>
void up_backward(const Tensor<T>& in, const T* w, const Tensor<T>& dout, T* dw, Tensor<T>* din) {
    const Extent3 e = in.extent();
    const Extent3 eo = dout.extent();
    const int cin = in.channels();
    const int cout = dout.channels();
    if (din != nullptr && !(din->channels() == cin && din->extent() == e)) *din = Tensor<T>(cin, e);
    for (int o = 0; o < cout; ++o) {
        const T* gp = dout.channel(o).data();
        for (int c = 0; c < cin; ++c) {
            const T* ip = in.channel(c).data();
            T* dip = din != nullptr ? din->channel(c).data() : nullptr;
            const std::size_t wbase = (static_cast<std::size_t>(o) * cin + c) * 8;
            T acc[8] = {};
            for (int y = 0; y < e.h; ++y)
                for (int x = 0; x < e.w; ++x) {
                    const std::size_t ib = e.index(y, x, 0);
                    const T* irow = ip + ib;
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx) {
                            const T* grow = gp + eo.index(2 * y + ky, 2 * x + kx, 0);
                            const int t = ky * 4 + kx * 2;
                            T a0 = 0, a1 = 0;
                            for (int z = 0; z < e.d; ++z) {
                                a0 += grow[2 * z] * irow[z];
                                a1 += grow[2 * z + 1] * irow[z];
                            }
                            acc[t] += a0;
                            acc[t + 1] += a1;
                            if (dip != nullptr) {
                                T* drow = dip + ib;
                                const T w0 = w[wbase + t], w1 = w[wbase + t + 1];
                                for (int z = 0; z < e.d; ++z) drow[z] += w0 * grow[2 * z] + w1 * grow[2 * z + 1];
                            }
                        }
                }
            for (int t = 0; t < 8; ++t) dw[wbase + t] += acc[t];
        }
    }
}

// ---------------------------------------------------------------------------
// 1x1x1 convolution with bias.

template <typename T>
void pointwise_forward(const Tensor<T>& in, const T* w, const T* b, int out_channels, Tensor<T>& out) {
    const int cin = in.channels();
    const std::size_t n = in.voxels();
    out = Tensor<T>(out_channels, in.extent());
    for (int o = 0; o < out_channels; ++o) {
        T* __restrict op = out.channel(o).data();
        const T bias = b != nullptr ? b[o] : T(0);
        for (std::size_t v = 0; v < n; ++v) op[v] = bias;
        for (int c = 0; c < cin; ++c) {
            const T wv = w[static_cast<std::size_t>(o) * cin + c];
            const T* __restrict ip = in.channel(c).data();
            for (std::size_t v = 0; v < n; ++v) op[v] += wv * ip[v];
        }
    }
}

template <typename T>
void pointwise_backward(const Tensor<T>& in, const T* w, const Tensor<T>& dout, T* dw, T* db, Tensor<T>* din) {
    const int cin = in.channels();
    const int cout = dout.channels();
    const std::size_t n = in.voxels();
    if (din != nullptr && !(din->channels() == cin && din->extent() == in.extent())) *din = Tensor<T>(cin, in.extent());
    for (int o = 0; o < cout; ++o) {
        const T* __restrict gp = dout.channel(o).data();
        if (db != nullptr) {
            T s = 0;
            for (std::size_t v = 0; v < n; ++v) s += gp[v];
            db[o] += s;
        }
        for (int c = 0; c < cin; ++c) {
            const T* __restrict ip = in.channel(c).data();
            T s = 0;
            for (std::size_t v = 0; v < n; ++v) s += gp[v] * ip[v];
            dw[static_cast<std::size_t>(o) * cin + c] += s;
            if (din != nullptr) {
                const T wv = w[static_cast<std::size_t>(o) * cin + c];
                T* __restrict dp = din->channel(c).data();
                for (std::size_t v = 0; v < n; ++v) dp[v] += wv * gp[v];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Instance normalisation with per-channel affine, statistics over the spatial
// extent of a single volume (independent of batch composition).

inline constexpr double kNormEps = 1e-5;

template <typename T>
struct NormCache {
    Tensor<T> xhat;
    std::vector<double> inv_std;
};

template <typename T>
void instance_norm_forward(const Tensor<T>& x, const T* gamma, const T* beta, Tensor<T>& y, NormCache<T>* cache) {
    const int ch = x.channels();
    const std::size_t n = x.voxels();
    y = Tensor<T>(ch, x.extent());
    if (cache != nullptr) {
        cache->xhat = Tensor<T>(ch, x.extent());
        cache->inv_std.assign(static_cast<std::size_t>(ch), 0.0);
    }
    for (int c = 0; c < ch; ++c) {
        const T* xp = x.channel(c).data();
        double mean = 0.0;
        for (std::size_t v = 0; v < n; ++v) mean += xp[v];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            const double dlt = xp[v] - mean;
            var += dlt * dlt;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + kNormEps);
        const T m = static_cast<T>(mean), is = static_cast<T>(inv), g = gamma[c], b = beta[c];
        T* yp = y.channel(c).data();
        T* hp = cache != nullptr ? cache->xhat.channel(c).data() : nullptr;
        for (std::size_t v = 0; v < n; ++v) {
            const T h = (xp[v] - m) * is;
            if (hp != nullptr) hp[v] = h;
            yp[v] = g * h + b;
        }
        if (cache != nullptr) cache->inv_std[static_cast<std::size_t>(c)] = inv;
    }
}

template <typename T>
void instance_norm_backward(const NormCache<T>& cache, const T* gamma, const Tensor<T>& dy, T* dgamma, T* dbeta,
                            Tensor<T>& dx) {
    const int ch = dy.channels();
    const std::size_t n = dy.voxels();
    dx = Tensor<T>(ch, dy.extent());
    for (int c = 0; c < ch; ++c) {
        const T* gp = dy.channel(c).data();
        const T* hp = cache.xhat.channel(c).data();
        double sum_g = 0.0, sum_gh = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            sum_g += gp[v];
            sum_gh += static_cast<double>(gp[v]) * hp[v];
        }
        dgamma[c] += static_cast<T>(sum_gh);
        dbeta[c] += static_cast<T>(sum_g);
        const double g = gamma[c];
        const double inv = cache.inv_std[static_cast<std::size_t>(c)];
        const T scale = static_cast<T>(g * inv);
        const T mg = static_cast<T>(sum_g / static_cast<double>(n));
        const T mgh = static_cast<T>(sum_gh / static_cast<double>(n));
        T* dp = dx.channel(c).data();
        for (std::size_t v = 0; v < n; ++v) dp[v] = scale * (gp[v] - mg - hp[v] * mgh);
    }
}

// ---------------------------------------------------------------------------
// Elementwise helpers.

template <typename T>
void relu_inplace(Tensor<T>& x) {
    for (T& v : x.values()) v = v > T(0) ? v : T(0);
}

/// dx = dy where y > 0, else 0 (y is the rectifier output).
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
    const T* yp = y.data();
    T* gp = dy.data();
    const std::size_t n = dy.size();
    for (std::size_t i = 0; i < n; ++i) gp[i] = yp[i] > T(0) ? gp[i] : T(0);
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
    T* d = dst.data();
    const T* s = src.data();
    const std::size_t n = dst.size();
    for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

/// Channel softmax, max-subtracted.
template <typename T>
void softmax_channels(const Tensor<T>& logits, Tensor<T>& probs) {
    const int k = logits.channels();
    const std::size_t n = logits.voxels();
    probs = Tensor<T>(k, logits.extent());
    std::vector<T> row(static_cast<std::size_t>(k));
    for (std::size_t v = 0; v < n; ++v) {
        T mx = logits.at(0, v);
        for (int c = 1; c < k; ++c) mx = std::max(mx, logits.at(c, v));
        T sum = 0;
        for (int c = 0; c < k; ++c) {
            row[static_cast<std::size_t>(c)] = std::exp(logits.at(c, v) - mx);
            sum += row[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) probs.at(c, v) = row[static_cast<std::size_t>(c)] / sum;
    }
}

/// dlogit_c = p_c * (dp_c - sum_k p_k dp_k)
template <typename T>
void softmax_backward(const Tensor<T>& probs, const Tensor<T>& dprobs, Tensor<T>& dlogits) {
    const int k = probs.channels();
    const std::size_t n = probs.voxels();
    dlogits = Tensor<T>(k, probs.extent());
    for (std::size_t v = 0; v < n; ++v) {
        T dot = 0;
        for (int c = 0; c < k; ++c) dot += probs.at(c, v) * dprobs.at(c, v);
        for (int c = 0; c < k; ++c) dlogits.at(c, v) = probs.at(c, v) * (dprobs.at(c, v) - dot);
    }
}

}  // namespace voxadv::nn
