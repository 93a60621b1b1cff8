#include "voxadv/teacher_student.hpp"

#include "voxadv/rng.hpp"

namespace voxadv {

template <typename T>
ModelPair<T> init_model_pair(std::uint64_t seed, int base_channels, int num_classes, int fused_channels, int head_width) {
    ModelPair<T> m;
    m.student_backbone = init_backbone<T>(derive_seed(seed, {1}), base_channels, num_classes);
    m.student_fusion = init_fusion<T>(derive_seed(seed, {2}), pyramid_channels(base_channels), fused_channels);
    m.heads = init_representation_heads<T>(derive_seed(seed, {3}), fused_channels, head_width);
    m.teacher_backbone = m.student_backbone;
    m.teacher_fusion = m.student_fusion;
    m.heads.teacher_projection = m.heads.student_projection;
    return m;
}

template <typename T>
void ema_update(ParamSet<T>& teacher, const ParamSet<T>& student, double lambda) {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw DomainError("EMA decay must lie in [0,1)");
    if (!teacher.same_layout(student)) throw ShapeError("EMA coupling error: teacher and student layouts differ");
    const T keep = static_cast<T>(lambda);
    const T take = static_cast<T>(1.0 - lambda);
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        T* t = teacher.data(i);
        const T* s = student.data(i);
        const std::size_t n = teacher[i].values.size();
        for (std::size_t k = 0; k < n; ++k) t[k] = keep * t[k] + take * s[k];
    }
}

template <typename T>
void ema_update(ModelPair<T>& pair, double lambda) {
    ema_update(pair.teacher_backbone.weights, pair.student_backbone.weights, lambda);
    ema_update(pair.teacher_fusion.weights, pair.student_fusion.weights, lambda);
    ema_update(pair.heads.teacher_projection, pair.heads.student_projection, lambda);
}

template <typename T>
LabelMask pseudo_label(const SoftPrediction<T>& pred, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("pseudo-label threshold must lie in [0,1]");
    LabelMask m = argmax_labels(pred);
    const T threshold = static_cast<T>(t);
    for (std::size_t v = 0; v < m.labels.size(); ++v) {
        m.valid[v] = pred.probs.at(m.labels[v], v) > threshold ? 1 : 0;
    }
    return m;
}

#define VOXADV_INSTANTIATE(T)                                                                   \
    template ModelPair<T> init_model_pair<T>(std::uint64_t, int, int, int, int);                \
    template void ema_update(ParamSet<T>&, const ParamSet<T>&, double);                         \
    template void ema_update(ModelPair<T>&, double);                                            \
    template LabelMask pseudo_label(const SoftPrediction<T>&, double);
VOXADV_INSTANTIATE(float)
VOXADV_INSTANTIATE(double)
#undef VOXADV_INSTANTIATE

}  // namespace voxadv
