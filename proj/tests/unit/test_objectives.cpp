#include <catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "voxadv/error.hpp"
#include "voxadv/objectives.hpp"

using namespace voxadv;
using namespace voxadv::testing;

namespace {

SoftPrediction<double> one_hot_of(const LabelMask& m) {
    SoftPrediction<double> p{Tensor<double>(m.num_classes, m.extent)};
    for (std::size_t v = 0; v < m.labels.size(); ++v) p.probs.at(m.labels[v], v) = 1.0;
    return p;
}

SoftPrediction<double> constant_pred(Extent3 e, std::vector<double> per_class) {
    SoftPrediction<double> p{Tensor<double>(static_cast<int>(per_class.size()), e)};
    for (std::size_t v = 0; v < e.voxels(); ++v)
        for (std::size_t c = 0; c < per_class.size(); ++c) p.probs.at(static_cast<int>(c), v) = per_class[c];
    return p;
}

// Scalar re-statement of the soft dice objective over every class.
double scalar_dice(const SoftPrediction<double>& p, const LabelMask& g) {
    const int k = p.probs.channels();
    double acc = 0.0;
    for (int c = 0; c < k; ++c) {
        double pg = 0.0, pp = 0.0, gg = 0.0;
        for (std::size_t v = 0; v < g.labels.size(); ++v) {
            const double pv = p.probs.at(c, v);
            const double gv = g.labels[v] == c ? 1.0 : 0.0;
            pg += pv * gv;
            pp += pv * pv;
            gg += gv * gv;
        }
        acc += (2 * pg + kDiceEps) / (pp + gg + kDiceEps);
    }
    return 1.0 - acc / k;
}

}  // namespace

TEST_CASE("dice loss closed forms") {
    const auto g = random_mask({8, 8, 8}, 3, 1);
    CHECK(dice_loss(one_hot_of(g), g) < 1e-4);

    LabelMask half({4, 4, 4}, 2);
    for (std::size_t v = 0; v < 32; ++v) half.labels[v] = 1;
    LabelMask flipped = half;
    for (auto& l : flipped.labels) l = static_cast<std::uint8_t>(1 - l);
    CHECK(dice_loss(one_hot_of(flipped), half) == Catch::Approx(1.0).margin(1e-6));

    const auto uniform = constant_pred({4, 4, 4}, {0.5, 0.5});
    CHECK(dice_loss(uniform, half) == Catch::Approx(scalar_dice(uniform, half)).margin(1e-14));
    const auto p = random_prediction<double>(3, {5, 4, 3}, 2);
    const auto gm = random_mask({5, 4, 3}, 3, 3);
    CHECK(dice_loss(p, gm) == Catch::Approx(scalar_dice(p, gm)).margin(1e-14));
}

TEST_CASE("dice loss gradient matches central differences") {
    auto p = random_prediction<double>(3, {4, 4, 4}, 5);
    const auto g = random_mask({4, 4, 4}, 3, 6);
    const auto grad = dice_loss_grad(p, g);
    std::vector<double> x = to_vector(p.probs.values());
    auto f = [&] {
        std::copy(x.begin(), x.end(), p.probs.data());
        return dice_loss(p, g);
    };
    CHECK(relative_error(to_vector(grad.values()), numeric_gradient(x, f)) < 1e-7);
}

TEST_CASE("consistency loss closed forms") {
    const Extent3 e{3, 3, 3};
    const auto a = random_prediction<double>(2, e, 1);
    CHECK(consistency_loss(a, a) == 0.0);
    CHECK(consistency_loss(constant_pred(e, {1, 0}), constant_pred(e, {0, 1})) == Catch::Approx(1.0));
    CHECK(consistency_loss(constant_pred(e, {0.75, 0.25}), constant_pred(e, {0.25, 0.75})) == Catch::Approx(0.25));
}

TEST_CASE("consistency loss gradient matches central differences") {
    const auto t = random_prediction<double>(2, {4, 4, 4}, 7);
    auto s = random_prediction<double>(2, {4, 4, 4}, 8);
    const auto grad = consistency_loss_grad(t, s);
    std::vector<double> x = to_vector(s.probs.values());
    auto f = [&] {
        std::copy(x.begin(), x.end(), s.probs.data());
        return consistency_loss(t, s);
    };
    CHECK(relative_error(to_vector(grad.values()), numeric_gradient(x, f)) < 1e-7);
}

TEST_CASE("gaussian warm-up weight") {
    CHECK(std::abs(consistency_weight(2000, 2000) - 0.001) < 1e-9);
    CHECK(std::abs(consistency_weight(0, 2000) - 0.001 * std::exp(-5.0)) < 1e-9);
    CHECK(consistency_weight(1000, 2000) == Catch::Approx(2.8650e-4).epsilon(1e-4));
    CHECK(consistency_weight(5000, 2000) == consistency_weight(2000, 2000));
    CHECK(consistency_weight(-3, 2000) == consistency_weight(0, 2000));
    double last = 0.0;
    for (int t = 0; t <= 2000; t += 50) {
        CHECK(consistency_weight(t, 2000) >= last);
        last = consistency_weight(t, 2000);
    }
}

TEST_CASE("total loss combines weighted parts") {
    CHECK(total_loss({1, 1, 1, 1}, 0.01, 0.1, 0.001).total == Catch::Approx(1.111));
    CHECK(total_loss({0, 0, 0, 0}, 0.01, 0.1, 0.001).total == 0.0);
    CHECK(total_loss({0, 0, 0, 0.5}, 0.01, 0.1, 0.001).total == 0.5);
    const auto r = total_loss({2, 3, 4, 0.25}, 0.5, 0.25, 0.125);
    CHECK(r.adversarial == 2);
    CHECK(r.feature == 3);
    CHECK(r.consistency == 4);
    CHECK(r.dice == 0.25);
    CHECK(r.gamma_t == 0.125);
}

TEST_CASE("non-finite loss parts are named") {
    try {
        total_loss({0, std::nan(""), 0, 0}, 0.01, 0.1, 0.001);
        FAIL("accepted NaN");
    } catch (const DomainError& e) {
        CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("feature"));
    }
    CHECK_THROWS_AS(total_loss({INFINITY, 0, 0, 0}, 0.01, 0.1, 0.001), DomainError);
}

TEST_CASE("loss log rows round trip") {
    LossReport r{17, 0.001, 0.25, 1e-3, 0.6931471805599453, 1.5, 0.3, 2.865e-4, 0.75};
    CHECK(parse_loss_csv_row(loss_csv_row(r)) == r);
    CHECK(loss_csv_header() == "iteration,lr,dice,consistency,adversarial,feature,total,gamma_t,valid_pseudo_fraction");
    CHECK_THROWS(parse_loss_csv_row("1,2,3"));
}
