#include <catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "voxadv/error.hpp"
#include "voxadv/teacher_student.hpp"

using namespace voxadv;
using namespace voxadv::testing;

TEST_CASE("teacher starts as an exact copy of the student") {
    const auto pair = init_model_pair<float>(3, 2, 2, 16, 16);
    CHECK(pair.teacher_backbone.weights == pair.student_backbone.weights);
    CHECK(pair.teacher_fusion.weights == pair.student_fusion.weights);
    CHECK(pair.heads.teacher_projection == pair.heads.student_projection);
}

TEST_CASE("EMA with a frozen student follows the geometric recurrence") {
    const auto pair = init_model_pair<double>(1, 1, 2, 8, 8);
    auto student = pair.student_backbone.weights;
    auto teacher = student;
    Rng r(2);
    for (auto& t : teacher)
        for (auto& v : t.values) v += r.normal();
    const auto start = teacher;
    const double lambda = 0.99;
    const int k = 37;
    for (int i = 0; i < k; ++i) ema_update(teacher, student, lambda);
    const double decay = std::pow(lambda, k);
    for (std::size_t t = 0; t < teacher.size(); ++t)
        for (std::size_t i = 0; i < teacher[t].values.size(); ++i) {
            const double want = decay * start[t].values[i] + (1 - decay) * student[t].values[i];
            REQUIRE(std::abs(teacher[t].values[i] - want) < 1e-12);
        }
}

TEST_CASE("EMA with lambda zero copies bitwise") {
    auto pair = init_model_pair<float>(4, 1, 3, 8, 8);
    Rng r(5);
    for (auto& t : pair.student_backbone.weights)
        for (auto& v : t.values) v = static_cast<float>(r.normal());
    for (auto& t : pair.student_fusion.weights)
        for (auto& v : t.values) v = static_cast<float>(r.normal());
    for (auto& t : pair.heads.student_projection)
        for (auto& v : t.values) v = static_cast<float>(r.normal());
    ema_update(pair, 0.0);
    CHECK(pair.teacher_backbone.weights == pair.student_backbone.weights);
    CHECK(pair.teacher_fusion.weights == pair.student_fusion.weights);
    CHECK(pair.heads.teacher_projection == pair.heads.student_projection);
}

TEST_CASE("EMA rejects bad decay and mismatched layouts") {
    auto a = init_model_pair<double>(1, 1, 2, 8, 8);
    const auto b = init_model_pair<double>(1, 2, 2, 8, 8);
    CHECK_THROWS_AS(ema_update(a.teacher_backbone.weights, a.student_backbone.weights, 1.0), DomainError);
    CHECK_THROWS_AS(ema_update(a.teacher_backbone.weights, a.student_backbone.weights, -0.1), DomainError);
    CHECK_THROWS_AS(ema_update(a.teacher_backbone.weights, b.student_backbone.weights, 0.5), ShapeError);
}

TEST_CASE("pseudo labels need a strictly larger max probability") {
    SoftPrediction<double> p{Tensor<double>(2, {1, 1, 3})};
    const double hi[] = {0.7, 0.71, 0.4};
    for (int v = 0; v < 3; ++v) {
        p.probs(0, 0, 0, v) = hi[v];
        p.probs(1, 0, 0, v) = 1 - hi[v];
    }
    const auto m = pseudo_label(p, 0.7);
    CHECK(m.valid == std::vector<std::uint8_t>{0, 1, 0});
    CHECK(m.labels == std::vector<std::uint8_t>{0, 0, 1});
}

TEST_CASE("pseudo label validity is monotone in the threshold") {
    const auto p = random_prediction<double>(3, {8, 8, 8}, 9);
    std::size_t last = p.probs.extent().voxels() + 1;
    for (int step = 0; step < 14; ++step) {
        const auto m = pseudo_label(p, 0.3 + 0.05 * step);
        std::size_t n = 0;
        for (auto v : m.valid) n += v;
        CHECK(n <= last);
        last = n;
        CHECK(m.labels == argmax_labels(p).labels);
    }
    CHECK(last > 0);
    std::size_t none = 0;
    for (auto v : pseudo_label(p, 1.0).valid) none += v;
    CHECK(none == 0);
}
