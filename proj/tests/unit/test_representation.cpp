#include <catch_amalgamated.hpp>

#include "helpers.hpp"
#include "voxadv/error.hpp"
#include "voxadv/representation.hpp"

using namespace voxadv;
using namespace voxadv::testing;

namespace {

Matrix<double> rows(std::vector<std::vector<double>> r) {
    Matrix<double> m(r.size(), r[0].size());
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < r[i].size(); ++j) m(i, j) = r[i][j];
    return m;
}

VoxelFeatureBatch<double> batch_of(Matrix<double> v, std::vector<int> cls) {
    VoxelFeatureBatch<double> b;
    const std::size_t n = v.rows();
    b.vectors = std::move(v);
    b.class_ids = std::move(cls);
    b.domain.assign(n, Domain::labeled);
    for (std::size_t i = 0; i < n; ++i) b.positions.push_back(3 * i + 1);
    b.sources.assign(n, 0);
    return b;
}

}  // namespace

TEST_CASE("feature loss closed forms") {
    const auto a = rows({{1, 2, 3}, {-1, 0, 4}});
    CHECK(feature_loss(a, a) < 1e-6);
    CHECK(feature_loss(rows({{1, 0}}), rows({{0, 3}})) == Catch::Approx(2.0).margin(1e-6));
    CHECK(feature_loss(rows({{2, -1}}), rows({{-4, 2}})) == Catch::Approx(4.0).margin(1e-6));
}

TEST_CASE("feature loss is bounded and scale invariant") {
    const auto p = random_matrix<double>(20, 7, 1);
    const auto z = random_matrix<double>(20, 7, 2);
    const double l = feature_loss(p, z);
    CHECK(l >= 0.0);
    CHECK(l <= 4.0);
    auto p2 = p, z2 = z;
    for (auto& v : p2.values()) v *= 3.5;
    for (auto& v : z2.values()) v *= 0.2;
    CHECK(feature_loss(p2, z2) == Catch::Approx(l).margin(1e-9));
}

TEST_CASE("feature loss rejects mismatched shapes") {
    CHECK_THROWS_AS(feature_loss(Matrix<double>(3, 4), Matrix<double>(2, 4)), ShapeError);
    CHECK_THROWS_AS(feature_loss(Matrix<double>(3, 4), Matrix<double>(3, 5)), ShapeError);
}

TEST_CASE("feature loss gradient matches central differences") {
    auto p = random_matrix<double>(6, 5, 3);
    const auto z = random_matrix<double>(6, 5, 4);
    const auto g = feature_loss_grad(p, z);
    std::vector<double> x = to_vector(p.values());
    auto f = [&] {
        std::copy(x.begin(), x.end(), p.values().begin());
        return feature_loss(p, z);
    };
    CHECK(relative_error(to_vector(g.values()), numeric_gradient(x, f)) < 1e-7);
}

TEST_CASE("gradients flow through the student heads only") {
    auto heads = init_representation_heads<double>(5, 6, 8);
    auto sb = batch_of(random_matrix<double>(5, 6, 6), {0, 1, 1, 0, 1});
    const auto tb = batch_of(random_matrix<double>(5, 6, 7), {0, 1, 1, 0, 1});

    RepresentationTape<double> tape;
    const auto out = representation_forward(heads, sb, tb, &tape);
    CHECK(out.student.rows() == 5);
    CHECK(out.student.cols() == 8);
    CHECK(out.teacher.cols() == 8);
    auto pg = heads.student_projection.zeros_like();
    auto qg = heads.student_prediction.zeros_like();
    Matrix<double> dfeat;
    representation_backward(heads, tape, feature_loss_grad(out.student, out.teacher), pg, qg, &dfeat);

    auto objective = [&] {
        const auto o = representation_forward(heads, sb, tb);
        return feature_loss(o.student, o.teacher);
    };
    for (std::size_t t = 0; t < pg.size(); ++t) {
        INFO(pg[t].name);
        CHECK(relative_error(to_vector(pg[t].values), numeric_gradient(heads.student_projection[t].values, objective)) < 1e-6);
    }
    for (std::size_t t = 0; t < qg.size(); ++t) {
        INFO(qg[t].name);
        CHECK(relative_error(to_vector(qg[t].values), numeric_gradient(heads.student_prediction[t].values, objective)) < 1e-6);
    }
    std::vector<double> x = to_vector(sb.vectors.values());
    auto f = [&] {
        std::copy(x.begin(), x.end(), sb.vectors.values().begin());
        return objective();
    };
    CHECK(relative_error(to_vector(dfeat.values()), numeric_gradient(x, f)) < 1e-6);
}

TEST_CASE("misaligned batches are rejected") {
    const auto heads = init_representation_heads<double>(5, 4, 4);
    const auto sb = batch_of(random_matrix<double>(3, 4, 1), {0, 1, 0});
    auto tb = batch_of(random_matrix<double>(3, 4, 2), {0, 1, 1});
    CHECK_THROWS_AS(representation_forward(heads, sb, tb), DomainError);
    tb = batch_of(random_matrix<double>(3, 4, 2), {0, 1, 0});
    tb.positions[2] += 1;
    CHECK_THROWS_AS(representation_forward(heads, sb, tb), DomainError);
}
