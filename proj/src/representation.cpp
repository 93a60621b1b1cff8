#include "voxadv/representation.hpp"

#include <cmath>

#include "voxadv/error.hpp"

namespace voxadv {

namespace {

template <typename T>
void require_same(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("feature_loss: student " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs teacher " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

template <typename T>
double row_norm(std::span<const T> r) {
    double s = 0.0;
    for (T v : r) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

}  // namespace

template <typename T>
nn::MlpLayout RepresentationHeads<T>::projection_layout() const {
    return {"proj", {static_cast<std::size_t>(input_width), static_cast<std::size_t>(width), static_cast<std::size_t>(width)},
            nn::Activation::relu, false};
}

template <typename T>
nn::MlpLayout RepresentationHeads<T>::prediction_layout() const {
    return {"pred", {static_cast<std::size_t>(width), static_cast<std::size_t>(width), static_cast<std::size_t>(width)},
            nn::Activation::relu, false};
}

template <typename T>
RepresentationHeads<T> init_representation_heads(std::uint64_t seed, int input_width, int width) {
    RepresentationHeads<T> h;
    h.input_width = input_width;
    h.width = width;
    Rng rng(seed);
    nn::add_mlp_params(h.student_projection, h.projection_layout(), rng);
    nn::add_mlp_params(h.student_prediction, h.prediction_layout(), rng);
    h.teacher_projection = h.student_projection;
    return h;
}

template <typename T>
double feature_loss(const Matrix<T>& p, const Matrix<T>& z) {
    require_same(p, z);
    if (p.rows() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        const double np = row_norm(p.row(i)) + kNormalizeEps, nz = row_norm(z.row(i)) + kNormalizeEps;
        double s = 0.0;
        for (std::size_t k = 0; k < p.cols(); ++k) {
            const double d = p(i, k) / np - z(i, k) / nz;
            s += d * d;
        }
        total += s;
    }
    return total / static_cast<double>(p.rows());
}

template <typename T>
Matrix<T> feature_loss_grad(const Matrix<T>& p, const Matrix<T>& z) {
    require_same(p, z);
    Matrix<T> g(p.rows(), p.cols());
    if (p.rows() == 0) return g;
    const double scale = 2.0 / static_cast<double>(p.rows());
    std::vector<double> diff(p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        const double n = row_norm(p.row(i));
        const double np = n + kNormalizeEps, nz = row_norm(z.row(i)) + kNormalizeEps;
        double dot = 0.0;  // <diff, p>
        for (std::size_t k = 0; k < p.cols(); ++k) {
            diff[k] = p(i, k) / np - z(i, k) / nz;
            dot += diff[k] * p(i, k);
        }
        // d(p/(|p|+eps))/dp = I/np - p p^T / (|p| np^2)
        const double radial = n > 0.0 ? dot / (n * np * np) : 0.0;
        for (std::size_t k = 0; k < p.cols(); ++k) {
            g(i, k) = static_cast<T>(scale * (diff[k] / np - radial * p(i, k)));
        }
    }
    return g;
}

template <typename T>
RepresentationOutput<T> representation_forward(const RepresentationHeads<T>& heads, const VoxelFeatureBatch<T>& s,
                                               const VoxelFeatureBatch<T>& t, RepresentationTape<T>* tape) {
    if (s.size() != t.size()) {
        throw DomainError("representation batches are misaligned: " + std::to_string(s.size()) + " vs " + std::to_string(t.size()) + " rows");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.positions[i] != t.positions[i] || s.class_ids[i] != t.class_ids[i] || s.sources[i] != t.sources[i]) {
            throw DomainError("representation batches are misaligned at row " + std::to_string(i));
        }
    }
    RepresentationOutput<T> out;
    const Matrix<T> zs = nn::mlp_forward(heads.student_projection, 0, heads.projection_layout(), s.vectors,
                                         tape != nullptr ? &tape->projection : nullptr);
    out.student = nn::mlp_forward(heads.student_prediction, 0, heads.prediction_layout(), zs,
                                  tape != nullptr ? &tape->prediction : nullptr);
    out.teacher = nn::mlp_forward(heads.teacher_projection, 0, heads.projection_layout(), t.vectors);
    return out;
}

template <typename T>
void representation_backward(const RepresentationHeads<T>& heads, const RepresentationTape<T>& tape, const Matrix<T>& dstudent,
                             ParamSet<T>& projection_grads, ParamSet<T>& prediction_grads, Matrix<T>* dfeatures) {
    Matrix<T> dz;
    nn::mlp_backward(heads.student_prediction, 0, heads.prediction_layout(), tape.prediction, dstudent, &prediction_grads, &dz);
    nn::mlp_backward(heads.student_projection, 0, heads.projection_layout(), tape.projection, dz, &projection_grads, dfeatures);
}

#define VOXADV_INSTANTIATE(T)                                                                                      \
    template struct RepresentationHeads<T>;                                                                        \
    template RepresentationHeads<T> init_representation_heads<T>(std::uint64_t, int, int);                          \
    template double feature_loss(const Matrix<T>&, const Matrix<T>&);                                              \
    template Matrix<T> feature_loss_grad(const Matrix<T>&, const Matrix<T>&);                                      \
    template RepresentationOutput<T> representation_forward(const RepresentationHeads<T>&, const VoxelFeatureBatch<T>&, \
                                                            const VoxelFeatureBatch<T>&, RepresentationTape<T>*);  \
    template void representation_backward(const RepresentationHeads<T>&, const RepresentationTape<T>&,             \
                                          const Matrix<T>&, ParamSet<T>&, ParamSet<T>&, Matrix<T>*);
VOXADV_INSTANTIATE(float)
VOXADV_INSTANTIATE(double)
#undef VOXADV_INSTANTIATE

}  // namespace voxadv
