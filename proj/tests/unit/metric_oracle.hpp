#pragma once

// Brute-force reference metrics: explicit set counting and all-pairs surface distances.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "voxadv/rng.hpp"
#include "voxadv/types.hpp"

namespace voxadv::oracle {

struct Point {
    int y, x, z;
};

inline bool in_class(const LabelMask& m, int y, int x, int z, int c) {
    const Extent3 e = m.extent;
    if (y < 0 || x < 0 || z < 0 || y >= e.h || x >= e.w || z >= e.d) return false;
    return m(y, x, z) == c;
}

inline std::vector<Point> surface(const LabelMask& m, int c) {
    std::vector<Point> s;
    const Extent3 e = m.extent;
    for (int y = 0; y < e.h; ++y)
        for (int x = 0; x < e.w; ++x)
            for (int z = 0; z < e.d; ++z) {
                if (m(y, x, z) != c) continue;
                if (!in_class(m, y - 1, x, z, c) || !in_class(m, y + 1, x, z, c) || !in_class(m, y, x - 1, z, c) ||
                    !in_class(m, y, x + 1, z, c) || !in_class(m, y, x, z - 1, c) || !in_class(m, y, x, z + 1, c))
                    s.push_back({y, x, z});
            }
    return s;
}

inline double dice(const LabelMask& a, const LabelMask& b, int c) {
    long na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        na += a.labels[i] == c;
        nb += b.labels[i] == c;
        both += a.labels[i] == c && b.labels[i] == c;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

inline double jaccard(const LabelMask& a, const LabelMask& b, int c) {
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        inter += a.labels[i] == c && b.labels[i] == c;
        uni += a.labels[i] == c || b.labels[i] == c;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::vector<double> directed(const std::vector<Point>& from, const std::vector<Point>& to, const Spacing& s) {
    std::vector<double> out;
    for (const auto& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to) {
            const double dy = (p.y - q.y) * s.h, dx = (p.x - q.x) * s.w, dz = (p.z - q.z) * s.d;
            best = std::min(best, dy * dy + dx * dx + dz * dz);
        }
        out.push_back(std::sqrt(best));
    }
    return out;
}

inline std::optional<double> hd95(const LabelMask& a, const LabelMask& b, int c, const Spacing& s = {}) {
    const auto sa = surface(a, c), sb = surface(b, c);
    if (sa.empty() || sb.empty()) return std::nullopt;
    auto all = directed(sa, sb, s);
    const auto back = directed(sb, sa, s);
    all.insert(all.end(), back.begin(), back.end());
    std::sort(all.begin(), all.end());
    const double rank = 0.95 * static_cast<double>(all.size() - 1);
    const auto lo = static_cast<std::size_t>(rank);
    const std::size_t hi = lo + 1 < all.size() ? lo + 1 : lo;
    return all[lo] + (all[hi] - all[lo]) * (rank - static_cast<double>(lo));
}

inline std::optional<double> assd(const LabelMask& a, const LabelMask& b, int c, const Spacing& s = {}) {
    const auto sa = surface(a, c), sb = surface(b, c);
    if (sa.empty() || sb.empty()) return std::nullopt;
    double ma = 0.0, mb = 0.0;
    for (double d : directed(sa, sb, s)) ma += d;
    for (double d : directed(sb, sa, s)) mb += d;
    return 0.5 * (ma / static_cast<double>(sa.size()) + mb / static_cast<double>(sb.size()));
}

/// Blobby random mask: a few random boxes of class 1..k-1 plus sparse salt noise.
inline LabelMask random_blob_mask(Extent3 e, int k, Rng& rng) {
    LabelMask m(e, k);
    const int boxes = 1 + static_cast<int>(rng.index(4));
    for (int b = 0; b < boxes; ++b) {
        const int c = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(k - 1)));
        const int y0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(e.h)));
        const int x0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(e.w)));
        const int z0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(e.d)));
        const int y1 = std::min(e.h, y0 + 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(e.h))));
        const int x1 = std::min(e.w, x0 + 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(e.w))));
        const int z1 = std::min(e.d, z0 + 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(e.d))));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                for (int z = z0; z < z1; ++z) m(y, x, z) = static_cast<std::uint8_t>(c);
    }
    for (auto& l : m.labels)
        if (rng.uniform() < 0.03) l = static_cast<std::uint8_t>(rng.index(static_cast<std::uint64_t>(k)));
    return m;
}

}  // namespace voxadv::oracle
