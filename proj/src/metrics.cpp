#include "voxadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "voxadv/error.hpp"

namespace voxadv {

namespace {

void require_same(const LabelMask& a, const LabelMask& b) {
    if (!(a.extent == b.extent)) throw ShapeError("metric masks differ in extent: " + to_string(a.extent) + " vs " + to_string(b.extent));
}

struct Counts {
    std::size_t a = 0, b = 0, both = 0;
};

Counts count(const LabelMask& a, const LabelMask& b, int c) {
    require_same(a, b);
    Counts n;
    for (std::size_t v = 0; v < a.labels.size(); ++v) {
        const bool in_a = a.labels[v] == c, in_b = b.labels[v] == c;
        n.a += in_a;
        n.b += in_b;
        n.both += in_a && in_b;
    }
    return n;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher lower envelope of parabolas along one axis:
// out[q] = min_i f[i] + (s (q - i))^2.
void edt_1d(const double* f, double* out, int n, double s, std::vector<int>& v, std::vector<double>& z) {
    v.assign(static_cast<std::size_t>(n), 0);
    z.assign(static_cast<std::size_t>(n) + 1, 0.0);
    const double s2 = s * s;
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double sep = 0.0;
        while (true) {
            const int p = v[static_cast<std::size_t>(k)];
            sep = ((f[q] + s2 * q * q) - (f[p] + s2 * p * p)) / (2.0 * s2 * (q - p));
            if (sep <= z[static_cast<std::size_t>(k)] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        if (sep <= z[static_cast<std::size_t>(k)]) {
            // k == 0 and the new parabola dominates everywhere
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = sep;
        z[static_cast<std::size_t>(k) + 1] = kInf;
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
        const int p = v[static_cast<std::size_t>(j)];
        const double d = s * (q - p);
        out[q] = d * d + f[p];
    }
}

/// Squared Euclidean distance from every voxel to the nearest seed voxel.
std::vector<double> squared_edt(const Extent3& e, const std::vector<std::size_t>& seeds, const Spacing& sp) {
    std::vector<double> g(e.voxels(), kInf);
    for (std::size_t s : seeds) g[s] = 0.0;
    std::vector<int> v;
    std::vector<double> z;
    const int longest = std::max({e.h, e.w, e.d});
    std::vector<double> line(static_cast<std::size_t>(longest)), out(static_cast<std::size_t>(longest));
    // d axis (contiguous)
    for (int y = 0; y < e.h; ++y)
        for (int x = 0; x < e.w; ++x) {
            double* row = g.data() + e.index(y, x, 0);
            edt_1d(row, out.data(), e.d, sp.d, v, z);
            std::copy(out.begin(), out.begin() + e.d, row);
        }
    // w axis
    for (int y = 0; y < e.h; ++y)
        for (int z0 = 0; z0 < e.d; ++z0) {
            for (int x = 0; x < e.w; ++x) line[static_cast<std::size_t>(x)] = g[e.index(y, x, z0)];
            edt_1d(line.data(), out.data(), e.w, sp.w, v, z);
            for (int x = 0; x < e.w; ++x) g[e.index(y, x, z0)] = out[static_cast<std::size_t>(x)];
        }
    // h axis
    for (int x = 0; x < e.w; ++x)
        for (int z0 = 0; z0 < e.d; ++z0) {
            for (int y = 0; y < e.h; ++y) line[static_cast<std::size_t>(y)] = g[e.index(y, x, z0)];
            edt_1d(line.data(), out.data(), e.h, sp.h, v, z);
            for (int y = 0; y < e.h; ++y) g[e.index(y, x, z0)] = out[static_cast<std::size_t>(y)];
        }
    return g;
}

}  // namespace

double dsc(const LabelMask& a, const LabelMask& b, int c) {
    const Counts n = count(a, b, c);
    if (n.a + n.b == 0) return 1.0;
    return 2.0 * static_cast<double>(n.both) / static_cast<double>(n.a + n.b);
}

double jaccard(const LabelMask& a, const LabelMask& b, int c) {
    const Counts n = count(a, b, c);
    const std::size_t uni = n.a + n.b - n.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(n.both) / static_cast<double>(uni);
}

std::vector<std::size_t> surface_voxels(const LabelMask& m, int c) {
    const Extent3& e = m.extent;
    std::vector<std::size_t> out;
    constexpr int kOff[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
    for (int y = 0; y < e.h; ++y)
        for (int x = 0; x < e.w; ++x)
            for (int z = 0; z < e.d; ++z) {
                const std::size_t v = e.index(y, x, z);
                if (m.labels[v] != c) continue;
                bool boundary = false;
                for (const auto& o : kOff) {
                    const int ny = y + o[0], nx = x + o[1], nz = z + o[2];
                    if (!e.contains(ny, nx, nz) || m.labels[e.index(ny, nx, nz)] != c) {
                        boundary = true;
                        break;
                    }
                }
                if (boundary) out.push_back(v);
            }
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw DomainError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double rank = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

std::vector<double> pooled_surface_distances(const LabelMask& a, const LabelMask& b, int c, const Spacing& spacing) {
    require_same(a, b);
    const auto sa = surface_voxels(a, c), sb = surface_voxels(b, c);
    if (sa.empty() || sb.empty()) return {};
    const auto da = squared_edt(a.extent, sb, spacing);
    const auto db = squared_edt(a.extent, sa, spacing);
    std::vector<double> out;
    out.reserve(sa.size() + sb.size());
    for (std::size_t v : sa) out.push_back(std::sqrt(da[v]));
    for (std::size_t v : sb) out.push_back(std::sqrt(db[v]));
    return out;
}

std::optional<double> hd95(const LabelMask& a, const LabelMask& b, int c, const Spacing& spacing) {
    auto d = pooled_surface_distances(a, b, c, spacing);
    if (d.empty()) return std::nullopt;
    return percentile(std::move(d), 0.95);
}

std::optional<double> assd(const LabelMask& a, const LabelMask& b, int c, const Spacing& spacing) {
    require_same(a, b);
    const auto sa = surface_voxels(a, c), sb = surface_voxels(b, c);
    if (sa.empty() || sb.empty()) return std::nullopt;
    const auto da = squared_edt(a.extent, sb, spacing);
    const auto db = squared_edt(a.extent, sa, spacing);
    double ma = 0.0, mb = 0.0;
    for (std::size_t v : sa) ma += std::sqrt(da[v]);
    for (std::size_t v : sb) mb += std::sqrt(db[v]);
    return 0.5 * (ma / static_cast<double>(sa.size()) + mb / static_cast<double>(sb.size()));
}

MetricReport evaluate_case(const LabelMask& prediction, const LabelMask& truth, const Spacing& spacing, DistanceUnit unit) {
    require_same(prediction, truth);
    MetricReport r;
    r.unit = unit;
    const Spacing sp = unit == DistanceUnit::mm ? spacing : Spacing{};
    double hd_sum = 0.0, as_sum = 0.0;
    int hd_n = 0, as_n = 0;
    for (int c = 1; c < truth.num_classes; ++c) {
        ClassMetrics m;
        m.dsc = 100.0 * dsc(prediction, truth, c);
        m.jaccard = 100.0 * jaccard(prediction, truth, c);
        m.hd95 = hd95(prediction, truth, c, sp);
        m.assd = assd(prediction, truth, c, sp);
        r.mean.dsc += m.dsc;
        r.mean.jaccard += m.jaccard;
        if (m.hd95) {
            hd_sum += *m.hd95;
            ++hd_n;
        }
        if (m.assd) {
            as_sum += *m.assd;
            ++as_n;
        }
        r.per_class.push_back(m);
    }
    const double k = static_cast<double>(r.per_class.size());
    r.mean.dsc /= k;
    r.mean.jaccard /= k;
    if (hd_n > 0) r.mean.hd95 = hd_sum / hd_n;
    if (as_n > 0) r.mean.assd = as_sum / as_n;
    return r;
}

}  // namespace voxadv
