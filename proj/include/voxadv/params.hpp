#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "voxadv/error.hpp"

namespace voxadv {

template <typename T>
struct Param {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<T> values;
};

/// Ordered, named collection of learnable tensors. Gradients, optimiser
/// moments and EMA shadows are ParamSets with the same layout.
template <typename T>
class ParamSet {
public:
    std::size_t add(std::string name, std::vector<std::size_t> shape, T fill = T(0)) {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        entries_.push_back({std::move(name), std::move(shape), std::vector<T>(n, fill)});
        return entries_.size() - 1;
    }

    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] bool empty() const { return entries_.empty(); }
    Param<T>& operator[](std::size_t i) { return entries_[i]; }
    const Param<T>& operator[](std::size_t i) const { return entries_[i]; }
    T* data(std::size_t i) { return entries_[i].values.data(); }
    const T* data(std::size_t i) const { return entries_[i].values.data(); }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    [[nodiscard]] const Param<T>* find(std::string_view name) const {
        for (const auto& p : entries_)
            if (p.name == name) return &p;
        return nullptr;
    }

    /// Total number of scalars.
    [[nodiscard]] std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : entries_) n += p.values.size();
        return n;
    }

    [[nodiscard]] ParamSet zeros_like() const {
        ParamSet out = *this;
        out.zero();
        return out;
    }

    void zero() {
        for (auto& p : entries_) std::fill(p.values.begin(), p.values.end(), T(0));
    }

    [[nodiscard]] bool same_layout(const ParamSet& o) const {
        if (o.entries_.size() != entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != o.entries_[i].name || entries_[i].shape != o.entries_[i].shape) return false;
        }
        return true;
    }

    void require_layout(const ParamSet& o, std::string_view what) const {
        if (!same_layout(o)) throw ShapeError(std::string(what) + ": parameter layouts differ");
    }

    /// this += scale * other
    void add_scaled(const ParamSet& o, T scale) {
        require_layout(o, "add_scaled");
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            T* dst = entries_[i].values.data();
            const T* src = o.entries_[i].values.data();
            const std::size_t n = entries_[i].values.size();
            for (std::size_t k = 0; k < n; ++k) dst[k] += scale * src[k];
        }
    }

    template <typename U>
    [[nodiscard]] ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& p : entries_) {
            const std::size_t idx = out.add(p.name, p.shape);
            for (std::size_t k = 0; k < p.values.size(); ++k) out[idx].values[k] = static_cast<U>(p.values[k]);
        }
        return out;
    }

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        if (!a.same_layout(b)) return false;
        for (std::size_t i = 0; i < a.entries_.size(); ++i)
            if (a.entries_[i].values != b.entries_[i].values) return false;
        return true;
    }

private:
    std::vector<Param<T>> entries_;
};

/// FNV-1a over names, shapes and raw value bytes; equal hashes mean bitwise-equal sets in practice.
template <typename T>
std::uint64_t hash_params(const ParamSet<T>& ps) {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : ps) {
        feed(p.name.data(), p.name.size());
        feed(p.shape.data(), p.shape.size() * sizeof(std::size_t));
        feed(p.values.data(), p.values.size() * sizeof(T));
    }
    return h;
}

}  // namespace voxadv
