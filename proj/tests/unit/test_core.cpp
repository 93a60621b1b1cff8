#include <catch_amalgamated.hpp>

#include <set>

#include "helpers.hpp"
#include "voxadv/config.hpp"
#include "voxadv/error.hpp"
#include "voxadv/params.hpp"
#include "voxadv/rng.hpp"
#include "voxadv/types.hpp"

using namespace voxadv;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("extent indexing is d-fastest") {
    const Extent3 e{3, 4, 5};
    CHECK(e.voxels() == 60);
    CHECK(e.index(0, 0, 1) == 1);
    CHECK(e.index(0, 1, 0) == 5);
    CHECK(e.index(1, 0, 0) == 20);
    CHECK(e.index(2, 3, 4) == 59);
    CHECK(e.halved() == Extent3{1, 2, 2});
    CHECK_FALSE(e.contains(3, 0, 0));
    CHECK(e.contains(2, 3, 4));
}

TEST_CASE("one-hot encoding sums to one per voxel") {
    const LabelMask m = testing::random_mask({4, 4, 4}, 3, 11);
    const auto p = one_hot_encode<double>(m, 3);
    CHECK(normalization_error(p) == 0.0);
    for (std::size_t v = 0; v < m.labels.size(); ++v) CHECK(p.probs.at(m.labels[v], v) == 1.0);
}

TEST_CASE("one-hot rejects labels outside the class range") {
    LabelMask m({2, 2, 2}, 3);
    m.labels[5] = 3;
    CHECK_THROWS_AS(one_hot_encode<float>(m, 3), DomainError);
    CHECK_THROWS_AS(m.validate(), DomainError);
}

TEST_CASE("argmax breaks ties toward the lowest class") {
    SoftPrediction<double> p{Tensor<double>(3, {1, 1, 2})};
    p.probs.at(0, 0) = 0.4;
    p.probs.at(1, 0) = 0.4;
    p.probs.at(2, 0) = 0.2;
    p.probs.at(0, 1) = 0.2;
    p.probs.at(1, 1) = 0.4;
    p.probs.at(2, 1) = 0.4;
    const LabelMask m = argmax_labels(p);
    CHECK(m.labels[0] == 0);
    CHECK(m.labels[1] == 1);
    CHECK(m.all_valid());
}

TEST_CASE("normalization error detects bad probability fields") {
    auto p = testing::random_prediction<double>(3, {3, 3, 3}, 5);
    CHECK(normalization_error(p) < 1e-12);
    p.probs.at(0, 4) += 0.25;
    CHECK(normalization_error(p) == Catch::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("volume validation reports non-finite voxels") {
    Volume v({2, 2, 2});
    v(1, 1, 1) = std::numeric_limits<float>::quiet_NaN();
    v(0, 0, 0) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_WITH(v.validate(), ContainsSubstring("2"));
}

TEST_CASE("config defaults follow the published recipe") {
    const TrainConfig la = make_preset(Preset::la);
    CHECK(la.alpha == 0.01);
    CHECK(la.beta == 0.1);
    CHECK(la.gamma_max == 0.001);
    CHECK(la.threshold_t == 0.7);
    CHECK(la.lambda_ema == 0.99);
    CHECK(la.lr == 0.01);
    CHECK(la.momentum == 0.9);
    CHECK(la.weight_decay == 1e-4);
    CHECK(la.t_max == 6000);
    CHECK(la.lr_decay_step == 2500);
    CHECK(la.disc_lr == 2e-4);
    CHECK(la.disc_beta1 == 0.5);
    CHECK(la.disc_beta2 == 0.999);
    CHECK(la.batch_labeled == 2);
    CHECK(la.batch_unlabeled == 2);
    CHECK(la.student_optimizer == OptimizerKind::sgd);

    const TrainConfig mo = make_preset(Preset::mo);
    CHECK(mo.student_optimizer == OptimizerKind::adam);
    CHECK(mo.lr == 1e-3);
    CHECK(mo.patch_size == Extent3{128, 128, 64});

    const TrainConfig syn = make_preset(Preset::synthetic);
    CHECK(syn.student_optimizer == OptimizerKind::sgd);
    CHECK(syn.t_max == 2000);
    CHECK(validate_config(syn).ok());
}

TEST_CASE("config validation names the offending field") {
    TrainConfig c;
    c.threshold_t = 1.5;
    c.lambda_ema = 1.0;
    c.patch_size = {32, 30, 32};
    const ConfigReport r = validate_config(c);
    REQUIRE(r.violations.size() == 3);
    CHECK_THAT(r.summary(), ContainsSubstring("threshold_t") && ContainsSubstring("1.5"));
    CHECK_THAT(r.summary(), ContainsSubstring("lambda_ema"));
    CHECK_THAT(r.summary(), ContainsSubstring("axis w"));
    CHECK_THROWS_AS(require_valid(c), ConfigError);
}

TEST_CASE("config text round-trips exactly") {
    TrainConfig c = make_preset(Preset::mo);
    c.alpha = 0.1 + 0.2;
    c.seed = 123456789012345ULL;
    c.patch_size = {16, 24, 40};
    c.flip_augment = false;
    const std::string text = serialize_config(c);
    CHECK(parse_config(text) == c);
    CHECK(serialize_config(parse_config(text)) == text);
}

TEST_CASE("config parsing rejects unknown keys and malformed lines") {
    CHECK_THROWS_AS(parse_config("alpah = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("alpha 0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("alpha = abc\n"), ConfigError);
    const TrainConfig c = parse_config("# comment\nalpha = 0.5  # trailing\n\n");
    CHECK(c.alpha == 0.5);
}

TEST_CASE("every config key is settable") {
    TrainConfig c;
    const std::string text = serialize_config(c);
    for (const auto& key : config_keys()) CHECK_THAT(text, ContainsSubstring(key + " = "));
}

TEST_CASE("rng streams are reproducible and derived seeds differ") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next() == b.next());
    std::set<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 100; ++i) seeds.insert(derive_seed(7, {i, 1}));
    CHECK(seeds.size() == 100);
    CHECK(derive_seed(7, {1, 2}) != derive_seed(7, {2, 1}));
}

TEST_CASE("rng index is unbiased enough and in range") {
    Rng r(3);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) {
        const auto k = r.index(5);
        REQUIRE(k < 5);
        ++counts[k];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("rng normal has unit moments") {
    Rng r(9);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("param sets compare layouts and hash values") {
    ParamSet<float> a;
    a.add("w", {2, 3}, 1.0f);
    a.add("b", {3});
    ParamSet<float> b = a;
    CHECK(hash_params(a) == hash_params(b));
    b[0].values[4] = 2.0f;
    CHECK(hash_params(a) != hash_params(b));
    CHECK(a.same_layout(b));
    ParamSet<float> c;
    c.add("w", {3, 2});
    c.add("b", {3});
    CHECK_FALSE(a.same_layout(c));
    CHECK_THROWS_AS(a.add_scaled(c, 1.0f), ShapeError);
    CHECK(a.count() == 9);
}
