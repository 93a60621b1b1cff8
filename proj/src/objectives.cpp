#include "voxadv/objectives.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

#include "voxadv/error.hpp"

namespace voxadv {

namespace {

struct DiceSums {
    std::vector<double> inter, pp, gg;
};

template <typename T>
DiceSums dice_sums(const SoftPrediction<T>& pred, const LabelMask& gt) {
    if (!(pred.extent() == gt.extent)) {
        throw ShapeError("dice: prediction " + to_string(pred.extent()) + " vs mask " + to_string(gt.extent));
    }
    const int k = pred.num_classes();
    DiceSums s{std::vector<double>(static_cast<std::size_t>(k)), std::vector<double>(static_cast<std::size_t>(k)),
               std::vector<double>(static_cast<std::size_t>(k))};
    for (int c = 0; c < k; ++c) {
        const T* p = pred.probs.channel(c).data();
        double inter = 0.0, pp = 0.0, gg = 0.0;
        for (std::size_t v = 0; v < gt.labels.size(); ++v) {
            const double pv = p[v];
            pp += pv * pv;
            if (gt.labels[v] == c) {
                inter += pv;
                gg += 1.0;
            }
        }
        s.inter[static_cast<std::size_t>(c)] = inter;
        s.pp[static_cast<std::size_t>(c)] = pp;
        s.gg[static_cast<std::size_t>(c)] = gg;
    }
    return s;
}

std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

}  // namespace

template <typename T>
double dice_loss(const SoftPrediction<T>& pred, const LabelMask& gt) {
    const DiceSums s = dice_sums(pred, gt);
    const std::size_t k = s.inter.size();
    double mean = 0.0;
    for (std::size_t c = 0; c < k; ++c) mean += (2.0 * s.inter[c] + kDiceEps) / (s.pp[c] + s.gg[c] + kDiceEps);
    return 1.0 - mean / static_cast<double>(k);
}

template <typename T>
Tensor<T> dice_loss_grad(const SoftPrediction<T>& pred, const LabelMask& gt) {
    const DiceSums s = dice_sums(pred, gt);
    const int k = pred.num_classes();
    Tensor<T> g(k, pred.extent());
    for (int c = 0; c < k; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        const double num = 2.0 * s.inter[cu] + kDiceEps;
        const double den = s.pp[cu] + s.gg[cu] + kDiceEps;
        // d/dp_v of -(num/den)/K = -(2 g_v den - num 2 p_v) / (K den^2)
        const double a = -2.0 / (static_cast<double>(k) * den);
        const double b = 2.0 * num / (static_cast<double>(k) * den * den);
        const T* p = pred.probs.channel(c).data();
        T* gp = g.channel(c).data();
        for (std::size_t v = 0; v < gt.labels.size(); ++v) {
            const double gv = gt.labels[v] == c ? 1.0 : 0.0;
            gp[v] = static_cast<T>(a * gv + b * p[v]);
        }
    }
    return g;
}

template <typename T>
double consistency_loss(const SoftPrediction<T>& teacher, const SoftPrediction<T>& student) {
    if (!teacher.probs.same_shape(student.probs)) throw ShapeError("consistency: teacher and student shapes differ");
    double s = 0.0;
    const T* a = teacher.probs.data();
    const T* b = student.probs.data();
    const std::size_t n = teacher.probs.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s / static_cast<double>(n);
}

template <typename T>
Tensor<T> consistency_loss_grad(const SoftPrediction<T>& teacher, const SoftPrediction<T>& student) {
    if (!teacher.probs.same_shape(student.probs)) throw ShapeError("consistency: teacher and student shapes differ");
    Tensor<T> g(student.probs.channels(), student.probs.extent());
    const std::size_t n = g.size();
    const double scale = 2.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        g.data()[i] = static_cast<T>(scale * (static_cast<double>(student.probs.data()[i]) - teacher.probs.data()[i]));
    }
    return g;
}

double consistency_weight(std::int64_t t, std::int64_t t_max, double gamma_max) {
    if (t_max <= 0) throw DomainError("consistency_weight needs t_max > 0");
    const double r = std::clamp(static_cast<double>(t) / static_cast<double>(t_max), 0.0, 1.0);
    const double u = 1.0 - r;
    return gamma_max * std::exp(-5.0 * u * u);
}

LossReport total_loss(const LossParts& parts, double alpha, double beta, double gamma_t) {
    for (auto [name, v] : {std::pair{"adversarial", parts.adversarial}, {"feature", parts.feature},
                           {"consistency", parts.consistency}, {"dice", parts.dice}}) {
        if (!std::isfinite(v)) throw DomainError(std::string("loss term '") + name + "' is not finite");
    }
    LossReport r;
    r.dice = parts.dice;
    r.consistency = parts.consistency;
    r.adversarial = parts.adversarial;
    r.feature = parts.feature;
    r.gamma_t = gamma_t;
    r.total = alpha * parts.adversarial + beta * parts.feature + gamma_t * parts.consistency + parts.dice;
    return r;
}

std::string loss_csv_header() {
    return "iteration,lr,dice,consistency,adversarial,feature,total,gamma_t,valid_pseudo_fraction";
}

std::string loss_csv_row(const LossReport& r) {
    return std::to_string(r.iteration) + "," + fmt(r.lr) + "," + fmt(r.dice) + "," + fmt(r.consistency) + "," +
           fmt(r.adversarial) + "," + fmt(r.feature) + "," + fmt(r.total) + "," + fmt(r.gamma_t) + "," +
           fmt(r.valid_pseudo_fraction);
}

LossReport parse_loss_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw DomainError("training log row must have 9 columns: " + line);
    auto num = [](const std::string& s) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc()) throw DomainError("bad number in training log: " + s);
        return v;
    };
    LossReport r;
    r.iteration = std::stoll(cells[0]);
    r.lr = num(cells[1]);
    r.dice = num(cells[2]);
    r.consistency = num(cells[3]);
    r.adversarial = num(cells[4]);
    r.feature = num(cells[5]);
    r.total = num(cells[6]);
    r.gamma_t = num(cells[7]);
    r.valid_pseudo_fraction = num(cells[8]);
    return r;
}

template double dice_loss(const SoftPrediction<float>&, const LabelMask&);
template double dice_loss(const SoftPrediction<double>&, const LabelMask&);
template Tensor<float> dice_loss_grad(const SoftPrediction<float>&, const LabelMask&);
template Tensor<double> dice_loss_grad(const SoftPrediction<double>&, const LabelMask&);
template double consistency_loss(const SoftPrediction<float>&, const SoftPrediction<float>&);
template double consistency_loss(const SoftPrediction<double>&, const SoftPrediction<double>&);
template Tensor<float> consistency_loss_grad(const SoftPrediction<float>&, const SoftPrediction<float>&);
template Tensor<double> consistency_loss_grad(const SoftPrediction<double>&, const SoftPrediction<double>&);

}  // namespace voxadv
