#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "voxadv/tensor.hpp"

namespace voxadv {

enum class Domain : std::uint8_t { labeled = 0, unlabeled = 1 };

inline const char* to_string(Domain d) { return d == Domain::labeled ? "labeled" : "unlabeled"; }

/// Sampled per-voxel feature vectors. All sequences are parallel; row i of
/// `vectors` is the feature of voxel `positions[i]` (flat index into the
/// source grid) of volume `sources[i]`.
template <typename T>
struct VoxelFeatureBatch {
    Matrix<T> vectors;
    std::vector<int> class_ids;
    std::vector<Domain> domain;
    std::vector<std::size_t> positions;
    std::vector<int> sources;

    [[nodiscard]] std::size_t size() const { return class_ids.size(); }
    [[nodiscard]] bool empty() const { return class_ids.empty(); }
    /// Throws ShapeError if the parallel sequences disagree in length.
    void validate() const;
    /// Appends all rows of `other`.
    void append(const VoxelFeatureBatch& other);
};

}  // namespace voxadv
