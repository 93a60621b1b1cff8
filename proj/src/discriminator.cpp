#include "voxadv/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "voxadv/error.hpp"

namespace voxadv {

namespace {

double clamp_score(double s) { return std::clamp(s, kScoreEps, 1.0 - kScoreEps); }
bool clamped(double s) { return s < kScoreEps || s > 1.0 - kScoreEps; }

void require_nonempty(const std::vector<double>& v, const char* what) {
    if (v.empty()) throw DomainError(std::string(what) + " needs at least one score");
}

}  // namespace

template <typename T>
nn::MlpLayout DiscriminatorParams<T>::trunk_layout() const {
    return {"trunk",
            {static_cast<std::size_t>(input_width), static_cast<std::size_t>(hidden_width), static_cast<std::size_t>(hidden_width)},
            nn::Activation::leaky_relu,
            true};
}

template <typename T>
DiscriminatorParams<T> init_discriminator(std::uint64_t seed, int input_width, int num_classes, int hidden_width) {
    DiscriminatorParams<T> p{input_width, hidden_width, num_classes, {}};
    Rng rng(seed);
    nn::add_mlp_params(p.weights, p.trunk_layout(), rng);
    const std::size_t bw = p.weights.add("branch.w", {static_cast<std::size_t>(num_classes), static_cast<std::size_t>(hidden_width)});
    const double sd = std::sqrt(1.0 / static_cast<double>(hidden_width));
    for (T& v : p.weights[bw].values) v = static_cast<T>(rng.normal() * sd);
    p.weights.add("branch.b", {static_cast<std::size_t>(num_classes)});
    return p;
}

template <typename T>
std::vector<double> discriminate(const DiscriminatorParams<T>& params, const VoxelFeatureBatch<T>& batch,
                                 DiscriminatorTape<T>* tape) {
    if (batch.empty()) throw DomainError("discriminate needs a non-empty batch");
    if (batch.vectors.cols() != static_cast<std::size_t>(params.input_width)) {
        throw ShapeError("feature width " + std::to_string(batch.vectors.cols()) + " does not match discriminator input " +
                         std::to_string(params.input_width));
    }
    for (int c : batch.class_ids) {
        if (c < 0 || c >= params.num_classes) {
            throw DomainError("class id " + std::to_string(c) + " has no discriminator branch (K=" +
                              std::to_string(params.num_classes) + ")");
        }
    }
    nn::MlpCache<T> cache;
    Matrix<T> hidden = nn::mlp_forward(params.weights, 0, params.trunk_layout(), batch.vectors, tape != nullptr ? &cache : nullptr);
    const auto hw = static_cast<std::size_t>(params.hidden_width);
    const T* bw = params.weights.data(kBranchW);
    const T* bb = params.weights.data(kBranchB);
    std::vector<double> scores(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto c = static_cast<std::size_t>(batch.class_ids[i]);
        double logit = bb[c];
        const T* wr = bw + c * hw;
        for (std::size_t k = 0; k < hw; ++k) logit += static_cast<double>(wr[k]) * hidden(i, k);
        scores[i] = 1.0 / (1.0 + std::exp(-logit));
    }
    if (tape != nullptr) {
        tape->trunk = std::move(cache);
        tape->hidden = std::move(hidden);
        tape->class_ids = batch.class_ids;
        tape->scores = scores;
    }
    return scores;
}

template <typename T>
void discriminate_backward(const DiscriminatorParams<T>& params, const DiscriminatorTape<T>& tape,
                           const std::vector<double>& dscores, ParamSet<T>* grads, Matrix<T>* dinputs) {
    const std::size_t n = tape.scores.size();
    const auto hw = static_cast<std::size_t>(params.hidden_width);
    const T* bw = params.weights.data(kBranchW);
    Matrix<T> dhidden(n, hw);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = tape.scores[i];
        const double dlogit = dscores[i] * s * (1.0 - s);
        const auto c = static_cast<std::size_t>(tape.class_ids[i]);
        const T* wr = bw + c * hw;
        for (std::size_t k = 0; k < hw; ++k) dhidden(i, k) = static_cast<T>(dlogit * wr[k]);
        if (grads != nullptr) {
            T* gw = grads->data(kBranchW) + c * hw;
            for (std::size_t k = 0; k < hw; ++k) gw[k] += static_cast<T>(dlogit * tape.hidden(i, k));
            grads->data(kBranchB)[c] += static_cast<T>(dlogit);
        }
    }
    nn::mlp_backward(params.weights, 0, params.trunk_layout(), tape.trunk, dhidden, grads, dinputs);
}

double discriminator_loss(const std::vector<double>& real, const std::vector<double>& fake) {
    require_nonempty(real, "discriminator_loss (labeled)");
    require_nonempty(fake, "discriminator_loss (unlabeled)");
    double lr = 0.0, lf = 0.0;
    for (double s : real) lr += std::log(clamp_score(s));
    for (double s : fake) lf += std::log(1.0 - clamp_score(s));
    return -(lr / static_cast<double>(real.size()) + lf / static_cast<double>(fake.size()));
}

void discriminator_loss_grad(const std::vector<double>& real, const std::vector<double>& fake, std::vector<double>& dr,
                             std::vector<double>& df) {
    require_nonempty(real, "discriminator_loss (labeled)");
    require_nonempty(fake, "discriminator_loss (unlabeled)");
    const double nr = static_cast<double>(real.size()), nf = static_cast<double>(fake.size());
    dr.resize(real.size());
    df.resize(fake.size());
    for (std::size_t i = 0; i < real.size(); ++i) dr[i] = clamped(real[i]) ? 0.0 : -1.0 / (real[i] * nr);
    for (std::size_t i = 0; i < fake.size(); ++i) df[i] = clamped(fake[i]) ? 0.0 : 1.0 / ((1.0 - fake[i]) * nf);
}

double generator_adversarial_loss(const std::vector<double>& fake) {
    require_nonempty(fake, "generator_adversarial_loss");
    double l = 0.0;
    for (double s : fake) l += std::log(clamp_score(s));
    return -l / static_cast<double>(fake.size());
}

std::vector<double> generator_adversarial_loss_grad(const std::vector<double>& fake) {
    require_nonempty(fake, "generator_adversarial_loss");
    const double n = static_cast<double>(fake.size());
    std::vector<double> d(fake.size());
    for (std::size_t i = 0; i < fake.size(); ++i) d[i] = clamped(fake[i]) ? 0.0 : -1.0 / (fake[i] * n);
    return d;
}

#define VOXADV_INSTANTIATE(T)                                                                                            \
    template struct DiscriminatorParams<T>;                                                                              \
    template DiscriminatorParams<T> init_discriminator<T>(std::uint64_t, int, int, int);                                 \
    template std::vector<double> discriminate(const DiscriminatorParams<T>&, const VoxelFeatureBatch<T>&,                \
                                              DiscriminatorTape<T>*);                                                    \
    template void discriminate_backward(const DiscriminatorParams<T>&, const DiscriminatorTape<T>&,                      \
                                        const std::vector<double>&, ParamSet<T>*, Matrix<T>*);
VOXADV_INSTANTIATE(float)
VOXADV_INSTANTIATE(double)
#undef VOXADV_INSTANTIATE

}  // namespace voxadv
