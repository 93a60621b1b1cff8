#include <catch_amalgamated.hpp>

#include <cmath>

#include "voxadv/optim.hpp"

using namespace voxadv;

namespace {

ParamSet<double> single(std::vector<double> v) {
    ParamSet<double> p;
    p.add("w", {v.size()});
    p[0].values = std::move(v);
    return p;
}

}  // namespace

TEST_CASE("heavy-ball SGD with weight decay follows the hand recurrence") {
    OptimizerSettings s;
    s.momentum = 0.9;
    s.weight_decay = 0.1;
    auto p = single({1.0, -2.0});
    auto slot = OptimizerSlot<double>::for_params(p);
    const auto g = single({0.5, 0.25});

    optimizer_step(s, 0.1, p, g, slot);
    // v = 0.5 + 0.1*1 = 0.6 ; p = 1 - 0.06
    CHECK(p[0].values[0] == Catch::Approx(0.94).margin(1e-15));
    // v = 0.25 - 0.2 = 0.05 ; p = -2 - 0.005
    CHECK(p[0].values[1] == Catch::Approx(-2.005).margin(1e-15));

    optimizer_step(s, 0.1, p, g, slot);
    // v = 0.9*0.6 + 0.5 + 0.094 = 1.134
    CHECK(p[0].values[0] == Catch::Approx(0.94 - 0.1134).margin(1e-14));
    CHECK(slot.steps == 2);
}

TEST_CASE("Adam matches an independent reference") {
    OptimizerSettings s;
    s.kind = OptimizerKind::adam;
    s.beta1 = 0.5;
    s.beta2 = 0.999;
    s.eps = 1e-8;
    auto p = single({0.3, -1.2, 2.0});
    auto slot = OptimizerSlot<double>::for_params(p);
    std::vector<double> ref = p[0].values, m(3, 0.0), v(3, 0.0);
    const double lr = 2e-4;
    for (int t = 1; t <= 5; ++t) {
        const auto g = single({std::sin(t * 1.0), 0.1 * t, -0.7});
        optimizer_step(s, lr, p, g, slot);
        for (std::size_t i = 0; i < 3; ++i) {
            m[i] = 0.5 * m[i] + 0.5 * g[0].values[i];
            v[i] = 0.999 * v[i] + 0.001 * g[0].values[i] * g[0].values[i];
            const double mh = m[i] / (1 - std::pow(0.5, t));
            const double vh = v[i] / (1 - std::pow(0.999, t));
            ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[0].values[i] == Catch::Approx(ref[i]).margin(1e-14));
}

TEST_CASE("first Adam step moves each weight by about lr") {
    OptimizerSettings s;
    s.kind = OptimizerKind::adam;
    auto p = single({0.0, 0.0});
    auto slot = OptimizerSlot<double>::for_params(p);
    optimizer_step(s, 1e-3, p, single({3.0, -0.01}), slot);
    CHECK(p[0].values[0] == Catch::Approx(-1e-3).epsilon(1e-6));
    CHECK(p[0].values[1] == Catch::Approx(1e-3).epsilon(1e-4));
}

TEST_CASE("step decay schedule") {
    CHECK(lr_at(0, 0.01, 2500) == Catch::Approx(0.01));
    CHECK(lr_at(2499, 0.01, 2500) == Catch::Approx(0.01));
    CHECK(lr_at(2500, 0.01, 2500) == Catch::Approx(0.001));
    CHECK(lr_at(5999, 0.01, 2500) == Catch::Approx(0.0001));
    auto cfg = make_preset(Preset::la);
    CHECK(lr_at(0, cfg) == Catch::Approx(0.01));
    CHECK(lr_at(2500, cfg) == Catch::Approx(0.001));
    CHECK(lr_at(5999, cfg) == Catch::Approx(0.0001));
}
