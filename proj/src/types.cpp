#include "voxadv/types.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace voxadv {

std::string to_string(const Extent3& e) {
    std::ostringstream os;
    os << e.h << "x" << e.w << "x" << e.d;
    return os.str();
}

void Volume::validate() const {
    if (!(spacing.h > 0.0 && spacing.w > 0.0 && spacing.d > 0.0)) {
        throw DomainError("volume spacing must be strictly positive");
    }
    const Extent3& e = extent();
    if (e.h < 1 || e.w < 1 || e.d < 1) throw ShapeError("volume extent must be at least 1 on every axis");
    std::size_t bad = 0;
    for (float v : voxels.values()) bad += std::isfinite(v) ? 0 : 1;
    if (bad != 0) throw DomainError("volume has " + std::to_string(bad) + " non-finite voxels");
}

std::size_t LabelMask::valid_count() const {
    return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
}

void LabelMask::validate() const {
    if (num_classes < 2) throw DomainError("label mask needs at least two classes");
    if (labels.size() != extent.voxels() || valid.size() != extent.voxels()) {
        throw ShapeError("label mask storage does not match extent " + to_string(extent));
    }
    for (std::uint8_t l : labels) {
        if (l >= num_classes) {
            throw DomainError("label " + std::to_string(l) + " >= num_classes " + std::to_string(num_classes));
        }
    }
}

template <typename T>
double normalization_error(const SoftPrediction<T>& p) {
    const std::size_t n = p.probs.voxels();
    const int k = p.num_classes();
    double worst = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
        double sum = 0.0;
        for (int c = 0; c < k; ++c) {
            const double x = p.probs.at(c, v);
            if (!(x >= 0.0 && x <= 1.0)) return std::numeric_limits<double>::infinity();
            sum += x;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
}

template <typename T>
void FeaturePyramid<T>::validate() const {
    for (int j = 1; j < kLevels; ++j) {
        if (levels[j].channels() < levels[j - 1].channels()) {
            throw ShapeError("pyramid channel counts must be non-decreasing with depth");
        }
        if (!(levels[j].extent() == levels[j - 1].extent().halved())) {
            throw ShapeError("pyramid level " + std::to_string(j + 1) + " does not halve level " + std::to_string(j));
        }
    }
}

template <typename T>
SoftPrediction<T> one_hot_encode(const LabelMask& mask, int num_classes) {
    SoftPrediction<T> out{Tensor<T>(num_classes, mask.extent)};
    for (std::size_t v = 0; v < mask.labels.size(); ++v) {
        const int l = mask.labels[v];
        if (l >= num_classes) {
            throw DomainError("label " + std::to_string(l) + " >= K=" + std::to_string(num_classes));
        }
        out.probs.at(l, v) = T(1);
    }
    return out;
}

template <typename T>
LabelMask argmax_labels(const SoftPrediction<T>& pred) {
    const int k = pred.num_classes();
    LabelMask out(pred.extent(), k);
    const std::size_t n = pred.probs.voxels();
    for (std::size_t v = 0; v < n; ++v) {
        int best = 0;
        T best_p = pred.probs.at(0, v);
        for (int c = 1; c < k; ++c) {
            const T p = pred.probs.at(c, v);
            if (p > best_p) {
                best = c;
                best_p = p;
            }
        }
        out.labels[v] = static_cast<std::uint8_t>(best);
    }
    return out;
}

template double normalization_error(const SoftPrediction<float>&);
template double normalization_error(const SoftPrediction<double>&);
template struct FeaturePyramid<float>;
template struct FeaturePyramid<double>;
template SoftPrediction<float> one_hot_encode<float>(const LabelMask&, int);
template SoftPrediction<double> one_hot_encode<double>(const LabelMask&, int);
template LabelMask argmax_labels(const SoftPrediction<float>&);
template LabelMask argmax_labels(const SoftPrediction<double>&);

}  // namespace voxadv
