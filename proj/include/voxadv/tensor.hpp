#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "voxadv/error.hpp"

namespace voxadv {

/// Spatial extent of a 3D grid. Axis order is (h, w, d) with d fastest in memory.
struct Extent3 {
    int h = 0;
    int w = 0;
    int d = 0;

    [[nodiscard]] std::size_t voxels() const {
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(d);
    }
    [[nodiscard]] Extent3 halved() const { return {h / 2, w / 2, d / 2}; }
    [[nodiscard]] Extent3 doubled() const { return {h * 2, w * 2, d * 2}; }
    [[nodiscard]] std::size_t index(int y, int x, int z) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(d) +
               static_cast<std::size_t>(z);
    }
    [[nodiscard]] bool contains(int y, int x, int z) const {
        return y >= 0 && y < h && x >= 0 && x < w && z >= 0 && z < d;
    }
    friend bool operator==(const Extent3&, const Extent3&) = default;
};

std::string to_string(const Extent3& e);

/// Channel-first dense grid: channels x h x w x d, contiguous.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(int channels, Extent3 extent, T fill = T(0))
        : channels_(channels), extent_(extent), data_(static_cast<std::size_t>(channels) * extent.voxels(), fill) {}

    [[nodiscard]] int channels() const { return channels_; }
    [[nodiscard]] const Extent3& extent() const { return extent_; }
    [[nodiscard]] std::size_t voxels() const { return extent_.voxels(); }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] T* data() { return data_.data(); }
    [[nodiscard]] const T* data() const { return data_.data(); }
    [[nodiscard]] std::span<T> values() { return data_; }
    [[nodiscard]] std::span<const T> values() const { return data_; }

    [[nodiscard]] std::span<T> channel(int c) {
        return {data_.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
    }
    [[nodiscard]] std::span<const T> channel(int c) const {
        return {data_.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
    }

    T& operator()(int c, int y, int x, int z) {
        return data_[static_cast<std::size_t>(c) * voxels() + extent_.index(y, x, z)];
    }
    const T& operator()(int c, int y, int x, int z) const {
        return data_[static_cast<std::size_t>(c) * voxels() + extent_.index(y, x, z)];
    }
    T& at(int c, std::size_t voxel) { return data_[static_cast<std::size_t>(c) * voxels() + voxel]; }
    const T& at(int c, std::size_t voxel) const { return data_[static_cast<std::size_t>(c) * voxels() + voxel]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    [[nodiscard]] bool same_shape(const Tensor& o) const { return channels_ == o.channels_ && extent_ == o.extent_; }

    template <typename U>
    [[nodiscard]] Tensor<U> cast() const {
        Tensor<U> out(channels_, extent_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    int channels_ = 0;
    Extent3 extent_{};
    std::vector<T> data_;
};

/// Row-major matrix used for batches of voxel feature vectors.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T(0)) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] T* data() { return data_.data(); }
    [[nodiscard]] const T* data() const { return data_.data(); }
    [[nodiscard]] std::span<T> values() { return data_; }
    [[nodiscard]] std::span<const T> values() const { return data_; }
    [[nodiscard]] std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    void append_row(std::span<const T> r) {
        if (rows_ == 0 && cols_ == 0) cols_ = r.size();
        if (r.size() != cols_) throw ShapeError("matrix row width mismatch");
        data_.insert(data_.end(), r.begin(), r.end());
        ++rows_;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

}  // namespace voxadv
