#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "voxadv/data.hpp"
#include "voxadv/embedding.hpp"
#include "voxadv/error.hpp"
#include "voxadv/teacher_student.hpp"

using namespace voxadv;
using namespace voxadv::testing;
namespace fs = std::filesystem;

namespace {

std::size_t count_of(const std::string& s, const std::string& what) {
    std::size_t n = 0;
    for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("PCA recovers planted axes with a fixed sign") {
    const std::vector<double> u = {0.0, 0.6, 0.8}, v = {0.0, -0.8, 0.6};
    Rng rng(1);
    Matrix<double> x(400, 3);
    for (std::size_t i = 0; i < 400; ++i) {
        const double a = 5.0 * rng.normal(), b = 1.0 * rng.normal(), e = 0.01 * rng.normal();
        for (std::size_t k = 0; k < 3; ++k) x(i, k) = 2.0 + a * u[k] + b * v[k];
        x(i, 0) += e;
    }
    const auto p = fit_pca_2d(x);
    CHECK(std::abs(p.axes[0][1]) == Catch::Approx(0.6).margin(0.02));
    CHECK(std::abs(p.axes[0][2]) == Catch::Approx(0.8).margin(0.02));
    CHECK(std::abs(p.axes[1][1]) == Catch::Approx(0.8).margin(0.02));
    for (const auto& axis : p.axes) {
        const auto first = std::find_if(axis.begin(), axis.end(), [](double w) { return w != 0.0; });
        REQUIRE(first != axis.end());
        CHECK(*first > 0.0);
        double norm = 0.0;
        for (double w : axis) norm += w * w;
        CHECK(norm == Catch::Approx(1.0));
    }
    CHECK(p.variance[0] > p.variance[1]);
    CHECK(p.mean[1] == Catch::Approx(2.0).margin(0.5));
}

TEST_CASE("projected coordinates are centred and decorrelated") {
    const auto x = random_matrix<double>(200, 6, 3);
    const auto p = fit_pca_2d(x);
    const auto y = project(p, x);
    REQUIRE(y.cols() == 2);
    double m0 = 0, m1 = 0, c01 = 0, v0 = 0;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        m0 += y(i, 0);
        m1 += y(i, 1);
    }
    for (std::size_t i = 0; i < y.rows(); ++i) {
        c01 += y(i, 0) * y(i, 1);
        v0 += y(i, 0) * y(i, 0);
    }
    CHECK(std::abs(m0) < 1e-9);
    CHECK(std::abs(m1) < 1e-9);
    CHECK(std::abs(c01) < 1e-9);
    CHECK(v0 / 199 == Catch::Approx(p.variance[0]));
    // refitting the same data gives the same projection
    CHECK(project(fit_pca_2d(x), x) == y);
}

TEST_CASE("Fisher score on hand-computed clusters") {
    Matrix<double> x(4, 1);
    x(0, 0) = 0;
    x(1, 0) = 2;
    x(2, 0) = 10;
    x(3, 0) = 12;
    CHECK(fisher_score(x, {0, 0, 1, 1}) == Catch::Approx(25.0));
    CHECK(fisher_score(x, {0, 1, 0, 1}) == Catch::Approx(4.0 / 100.0));
    CHECK_THROWS_AS(fisher_score(x, {0, 1}), ShapeError);
}

TEST_CASE("Fisher score is invariant to scaling and grows with separation") {
    Rng rng(5);
    Matrix<double> x(100, 3);
    std::vector<int> labels(100);
    for (std::size_t i = 0; i < 100; ++i) {
        labels[i] = static_cast<int>(i % 2);
        for (std::size_t k = 0; k < 3; ++k) x(i, k) = rng.normal() + (labels[i] ? 1.0 : 0.0);
    }
    const double f = fisher_score(x, labels);
    auto scaled = x;
    for (auto& v : scaled.values()) v *= 7.0;
    CHECK(fisher_score(scaled, labels) == Catch::Approx(f));
    auto apart = x;
    for (std::size_t i = 0; i < 100; ++i)
        if (labels[i]) apart(i, 0) += 3.0;
    CHECK(fisher_score(apart, labels) > f);
}

TEST_CASE("scatter plot marks domains by shape") {
    Matrix<double> c(5, 2);
    for (std::size_t i = 0; i < 5; ++i) c(i, 0) = c(i, 1) = static_cast<double>(i);
    const auto svg = scatter_svg(c, {0, 1, 0, 1, 1},
                                 {Domain::labeled, Domain::labeled, Domain::unlabeled, Domain::unlabeled, Domain::unlabeled}, "t");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count_of(svg, "<circle") == 3);
    CHECK(count_of(svg, "<path") == 2);
}

TEST_CASE("embedding dumps cover both domains and round trip through CSV") {
    const auto dir = fs::temp_directory_path() / "voxadv_embedding";
    fs::remove_all(dir);
    auto m = make_split(generate_synthetic(dir, 3, 4, 1, 16, 2), 0.5, 1);
    const auto pair = init_model_pair<float>(2, 2, 2, 8, 8);
    std::vector<std::string> warnings;
    const auto d = collect_embeddings(pair.student_backbone, pair.student_fusion, m, Preset::synthetic, 10, 4, &warnings);
    CHECK(d.size() == 4 * 2 * 10);
    CHECK(d.features.cols() == 8);
    CHECK(warnings.empty());
    std::size_t labeled = 0;
    for (auto dom : d.domains) labeled += dom == Domain::labeled;
    CHECK(labeled == 40);
    const auto again = collect_embeddings(pair.student_backbone, pair.student_fusion, m, Preset::synthetic, 10, 4);
    CHECK(again.features == d.features);

    const auto coords = project(fit_pca_2d(d.features), d.features);
    write_embedding_csv(dir / "e.csv", d, coords);
    const auto back = read_embedding_csv(dir / "e.csv");
    CHECK(back.class_ids == d.class_ids);
    CHECK(back.domains == d.domains);
    CHECK(back.case_ids == d.case_ids);
    REQUIRE(back.features.rows() == d.features.rows());
    for (std::size_t i = 0; i < d.features.size(); ++i)
        CHECK(back.features.values()[i] == Catch::Approx(d.features.values()[i]).epsilon(1e-6));
}
