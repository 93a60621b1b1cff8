#include "voxadv/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "voxadv/nn/mlp.hpp"
#include "voxadv/nn/ops.hpp"
#include "voxadv/rng.hpp"

namespace voxadv {

namespace {

struct AxisTap {
    int i0, i1;
    double w0, w1;
};

AxisTap axis_tap(int out_index, int in_size, int out_size) {
    const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
    double src = (static_cast<double>(out_index) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in_size - 1) i0 = in_size - 1;
    const int i1 = i0 < in_size - 1 ? i0 + 1 : i0;
    const double l = src - i0;
    return {i0, i1, 1.0 - l, l};
}

struct Tap8 {
    std::array<std::size_t, 8> voxel;
    std::array<double, 8> weight;
};

Tap8 trilinear_taps(int y, int x, int z, const Extent3& in, const Extent3& out) {
    const AxisTap ty = axis_tap(y, in.h, out.h), tx = axis_tap(x, in.w, out.w), tz = axis_tap(z, in.d, out.d);
    Tap8 t{};
    int k = 0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                t.voxel[k] = in.index(a ? ty.i1 : ty.i0, b ? tx.i1 : tx.i0, c ? tz.i1 : tz.i0);
                t.weight[k] = (a ? ty.w1 : ty.w0) * (b ? tx.w1 : tx.w0) * (c ? tz.w1 : tz.w0);
                ++k;
            }
    return t;
}

std::size_t proj_w(int j) { return static_cast<std::size_t>(2 * j); }
std::size_t proj_b(int j) { return static_cast<std::size_t>(2 * j + 1); }
constexpr std::size_t kFuseW = 8;
constexpr std::size_t kFuseB = 9;

}  // namespace

std::array<int, 4> pyramid_channels(int base) { return {base, 2 * base, 4 * base, 8 * base}; }

template <typename T>
FusionParams<T> init_fusion(std::uint64_t seed, const std::array<int, 4>& level_channels, int fused) {
    FusionParams<T> p{level_channels, fused, {}};
    Rng rng(seed);
    const auto c = static_cast<std::size_t>(fused);
    for (int j = 0; j < 4; ++j) {
        const auto cj = static_cast<std::size_t>(level_channels[static_cast<std::size_t>(j)]);
        const std::size_t w = p.weights.add("proj" + std::to_string(j + 1) + ".w", {c, cj});
        const double sd = std::sqrt(1.0 / static_cast<double>(cj));
        for (T& v : p.weights[w].values) v = static_cast<T>(rng.normal() * sd);
        p.weights.add("proj" + std::to_string(j + 1) + ".b", {c});
    }
    const std::size_t w = p.weights.add("fuse.w", {c, c});
    const double sd = std::sqrt(1.0 / static_cast<double>(c));
    for (T& v : p.weights[w].values) v = static_cast<T>(rng.normal() * sd);
    p.weights.add("fuse.b", {c});
    return p;
}

template <typename T>
Tensor<T> trilinear_resize(const Tensor<T>& in, const Extent3& target) {
    const Extent3 e = in.extent();
    Tensor<T> out(in.channels(), target);
    if (e == target) return in;
    std::vector<Tap8> taps;
    taps.reserve(target.voxels());
    for (int y = 0; y < target.h; ++y)
        for (int x = 0; x < target.w; ++x)
            for (int z = 0; z < target.d; ++z) taps.push_back(trilinear_taps(y, x, z, e, target));
    for (int c = 0; c < in.channels(); ++c) {
        const T* ip = in.channel(c).data();
        T* op = out.channel(c).data();
        for (std::size_t v = 0; v < taps.size(); ++v) {
            double s = 0.0;
            for (int k = 0; k < 8; ++k) s += taps[v].weight[k] * ip[taps[v].voxel[k]];
            op[v] = static_cast<T>(s);
        }
    }
    return out;
}

template <typename T>
FusedFeatureGrid<T> resize_and_fuse(const FeaturePyramid<T>& pyr, const FusionParams<T>& params) {
    const Extent3 full = pyr.levels[0].extent();
    const int c = params.fused_channels;
    Tensor<T> sum(c, full);
    for (int j = 0; j < 4; ++j) {
        const Tensor<T>& level = pyr.levels[static_cast<std::size_t>(j)];
        if (level.channels() != params.level_channels[static_cast<std::size_t>(j)]) {
            throw ShapeError("pyramid level " + std::to_string(j + 1) + " width does not match fusion params");
        }
        Tensor<T> projected;
        nn::pointwise_forward(level, params.weights.data(proj_w(j)), params.weights.data(proj_b(j)), c, projected);
        nn::add_inplace(sum, trilinear_resize(projected, full));
    }
    FusedFeatureGrid<T> out;
    nn::pointwise_forward(sum, params.weights.data(kFuseW), params.weights.data(kFuseB), c, out.features);
    return out;
}

template <typename T>
Matrix<T> fuse_at(const FeaturePyramid<T>& pyr, const FusionParams<T>& params, const std::vector<std::size_t>& positions,
                  FusionTape<T>* tape) {
    const Extent3 full = pyr.levels[0].extent();
    const std::size_t n = positions.size();
    const auto c = static_cast<std::size_t>(params.fused_channels);
    Matrix<T> summed(n, c);
    std::array<Matrix<T>, 4> interp;
    for (int j = 0; j < 4; ++j) {
        const Tensor<T>& level = pyr.levels[static_cast<std::size_t>(j)];
        const int cj = level.channels();
        if (cj != params.level_channels[static_cast<std::size_t>(j)]) {
            throw ShapeError("pyramid level " + std::to_string(j + 1) + " width does not match fusion params");
        }
        Matrix<T>& raw = interp[static_cast<std::size_t>(j)];
        raw = Matrix<T>(n, static_cast<std::size_t>(cj));
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t p = positions[i];
            const int z = static_cast<int>(p % static_cast<std::size_t>(full.d));
            const int x = static_cast<int>((p / static_cast<std::size_t>(full.d)) % static_cast<std::size_t>(full.w));
            const int y = static_cast<int>(p / (static_cast<std::size_t>(full.d) * static_cast<std::size_t>(full.w)));
            if (j == 0) {
                for (int ch = 0; ch < cj; ++ch) raw(i, static_cast<std::size_t>(ch)) = level.at(ch, p);
                continue;
            }
            const Tap8 t = trilinear_taps(y, x, z, level.extent(), full);
            for (int ch = 0; ch < cj; ++ch) {
                double s = 0.0;
                for (int k = 0; k < 8; ++k) s += t.weight[k] * level.at(ch, t.voxel[k]);
                raw(i, static_cast<std::size_t>(ch)) = static_cast<T>(s);
            }
        }
        Matrix<T> proj;
        nn::linear_forward(raw, params.weights.data(proj_w(j)), params.weights.data(proj_b(j)), c, proj);
        for (std::size_t k = 0; k < summed.size(); ++k) summed.data()[k] += proj.data()[k];
    }
    Matrix<T> fused;
    nn::linear_forward(summed, params.weights.data(kFuseW), params.weights.data(kFuseB), c, fused);
    if (tape != nullptr) {
        tape->positions = positions;
        tape->interpolated = std::move(interp);
        tape->summed = std::move(summed);
    }
    return fused;
}

template <typename T>
void fuse_at_backward(const FeaturePyramid<T>& pyr, const FusionParams<T>& params, const FusionTape<T>& tape,
                      const Matrix<T>& dfused, ParamSet<T>& grads, std::array<Tensor<T>, 4>& dpyramid) {
    params.weights.require_layout(grads, "fuse_at_backward");
    const Extent3 full = pyr.levels[0].extent();
    Matrix<T> dsum;
    nn::linear_backward(tape.summed, params.weights.data(kFuseW), dfused, grads.data(kFuseW), grads.data(kFuseB), &dsum);
    for (int j = 0; j < 4; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const Tensor<T>& level = pyr.levels[ju];
        Tensor<T>& dlevel = dpyramid[ju];
        if (!dlevel.same_shape(level)) dlevel = Tensor<T>(level.channels(), level.extent());
        Matrix<T> draw;
        nn::linear_backward(tape.interpolated[ju], params.weights.data(proj_w(j)), dsum, grads.data(proj_w(j)),
                            grads.data(proj_b(j)), &draw);
        const int cj = level.channels();
        for (std::size_t i = 0; i < tape.positions.size(); ++i) {
            const std::size_t p = tape.positions[i];
            if (j == 0) {
                for (int ch = 0; ch < cj; ++ch) dlevel.at(ch, p) += draw(i, static_cast<std::size_t>(ch));
                continue;
            }
            const int z = static_cast<int>(p % static_cast<std::size_t>(full.d));
            const int x = static_cast<int>((p / static_cast<std::size_t>(full.d)) % static_cast<std::size_t>(full.w));
            const int y = static_cast<int>(p / (static_cast<std::size_t>(full.d) * static_cast<std::size_t>(full.w)));
            const Tap8 t = trilinear_taps(y, x, z, level.extent(), full);
            for (int ch = 0; ch < cj; ++ch) {
                const T g = draw(i, static_cast<std::size_t>(ch));
                for (int k = 0; k < 8; ++k) dlevel.at(ch, t.voxel[k]) += static_cast<T>(t.weight[k]) * g;
            }
        }
    }
}

std::vector<VoxelSample> sample_voxel_positions(const LabelMask& mask, int per_class_cap, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(mask.num_classes));
    for (std::size_t v = 0; v < mask.labels.size(); ++v) {
        if (mask.valid[v] == 0) continue;
        const std::size_t l = mask.labels[v];
        if (l >= by_class.size()) throw DomainError("label exceeds num_classes during sampling");
        by_class[l].push_back(v);
    }
    Rng rng(seed);
    std::vector<VoxelSample> out;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& cand = by_class[c];
        const std::size_t k = std::min(cand.size(), static_cast<std::size_t>(std::max(per_class_cap, 0)));
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.index(cand.size() - i));
            std::swap(cand[i], cand[j]);
            out.push_back({cand[i], static_cast<int>(c)});
        }
    }
    return out;
}

template <typename T>
VoxelFeatureBatch<T> sample_voxel_features(const FusedFeatureGrid<T>& f, const LabelMask& mask, int per_class_cap,
                                           std::uint64_t seed, Domain domain, int source) {
    if (!(mask.extent == f.features.extent())) {
        throw ShapeError("mask extent " + to_string(mask.extent) + " differs from fused grid " + to_string(f.features.extent()));
    }
    const auto samples = sample_voxel_positions(mask, per_class_cap, seed);
    const auto c = static_cast<std::size_t>(f.features.channels());
    VoxelFeatureBatch<T> b;
    b.vectors = Matrix<T>(samples.size(), c);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) b.vectors(i, ch) = f.features.at(static_cast<int>(ch), samples[i].voxel);
        b.class_ids.push_back(samples[i].class_id);
        b.domain.push_back(domain);
        b.positions.push_back(samples[i].voxel);
        b.sources.push_back(source);
    }
    return b;
}

template <typename T>
void VoxelFeatureBatch<T>::validate() const {
    const std::size_t n = class_ids.size();
    if (vectors.rows() != n || domain.size() != n || positions.size() != n || sources.size() != n) {
        throw ShapeError("voxel feature batch sequences have unequal lengths");
    }
}

template <typename T>
void VoxelFeatureBatch<T>::append(const VoxelFeatureBatch& o) {
    for (std::size_t i = 0; i < o.size(); ++i) vectors.append_row(o.vectors.row(i));
    class_ids.insert(class_ids.end(), o.class_ids.begin(), o.class_ids.end());
    domain.insert(domain.end(), o.domain.begin(), o.domain.end());
    positions.insert(positions.end(), o.positions.begin(), o.positions.end());
    sources.insert(sources.end(), o.sources.begin(), o.sources.end());
}

#define VOXADV_INSTANTIATE(T)                                                                                     \
    template FusionParams<T> init_fusion<T>(std::uint64_t, const std::array<int, 4>&, int);                       \
    template Tensor<T> trilinear_resize(const Tensor<T>&, const Extent3&);                                         \
    template FusedFeatureGrid<T> resize_and_fuse(const FeaturePyramid<T>&, const FusionParams<T>&);               \
    template Matrix<T> fuse_at(const FeaturePyramid<T>&, const FusionParams<T>&, const std::vector<std::size_t>&, \
                               FusionTape<T>*);                                                                   \
    template void fuse_at_backward(const FeaturePyramid<T>&, const FusionParams<T>&, const FusionTape<T>&,        \
                                   const Matrix<T>&, ParamSet<T>&, std::array<Tensor<T>, 4>&);                    \
    template VoxelFeatureBatch<T> sample_voxel_features(const FusedFeatureGrid<T>&, const LabelMask&, int,        \
                                                        std::uint64_t, Domain, int);                              \
    template struct VoxelFeatureBatch<T>;
VOXADV_INSTANTIATE(float)
VOXADV_INSTANTIATE(double)
#undef VOXADV_INSTANTIATE

}  // namespace voxadv
