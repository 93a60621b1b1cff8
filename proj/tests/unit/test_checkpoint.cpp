#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "voxadv/checkpoint.hpp"
#include "voxadv/error.hpp"

using namespace voxadv;

namespace {

Checkpoint sample() {
    Checkpoint c;
    c.put_text("meta/config", "alpha = 0.01\n");
    c.put_int("meta/iteration", 1234);
    c.put_int("meta/neg", -7);
    c.put_array<float>("a/f", {2, 3}, {1.f, 2.f, 3.f, 4.f, 5.f, -0.f});
    c.put_array<double>("a/d", {1}, {3.141592653589793});
    ParamSet<double> ps;
    ps.add("conv.w", {2, 2}, 0.5);
    ps.add("conv.b", {2}, -1.0);
    c.put_params("student/x", ps);
    return c;
}

}  // namespace

TEST_CASE("checkpoint round trips through bytes and files") {
    const auto c = sample();
    const auto bytes = c.serialize();
    const auto back = Checkpoint::parse(bytes);
    CHECK(back.serialize() == bytes);
    CHECK(back.get_text("meta/config") == "alpha = 0.01\n");
    CHECK(back.get_int("meta/iteration") == 1234);
    CHECK(back.get_int("meta/neg") == -7);
    std::vector<std::uint64_t> dims;
    CHECK(back.get_array<float>("a/f", &dims) == std::vector<float>{1.f, 2.f, 3.f, 4.f, 5.f, -0.f});
    CHECK(dims == std::vector<std::uint64_t>{2, 3});
    CHECK(back.get_array<double>("a/d")[0] == 3.141592653589793);

    ParamSet<double> ps;
    ps.add("conv.w", {2, 2});
    ps.add("conv.b", {2});
    back.get_params("student/x", ps);
    CHECK(ps[0].values == std::vector<double>(4, 0.5));
    CHECK(ps[1].values == std::vector<double>(2, -1.0));

    const auto path = std::filesystem::temp_directory_path() / "voxadv_ckpt_test.vxck";
    c.save(path);
    CHECK(Checkpoint::load(path).serialize() == bytes);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint lookups check names, types and layouts") {
    const auto c = sample();
    CHECK_THROWS(c.get_text("missing"));
    CHECK_THROWS(c.get_int("meta/config"));
    CHECK_THROWS(c.get_array<double>("a/f"));
    ParamSet<double> wrong;
    wrong.add("conv.w", {3});
    wrong.add("conv.b", {2});
    CHECK_THROWS(c.get_params("student/x", wrong));
    ParamSet<float> as_float;
    as_float.add("conv.w", {2, 2});
    as_float.add("conv.b", {2});
    CHECK_THROWS(c.get_params("student/x", as_float));
}

TEST_CASE("corrupted, truncated and foreign checkpoints are rejected") {
    const auto bytes = sample().serialize();
    for (std::size_t at : {std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
        auto bad = bytes;
        bad[at] ^= 0x40;
        CHECK_THROWS_AS(Checkpoint::parse(bad), IoError);
    }
    for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{12}, bytes.size() - 4, bytes.size() - 1}) {
        CHECK_THROWS_AS(Checkpoint::parse({bytes.begin(), bytes.begin() + static_cast<long>(n)}), IoError);
    }
    auto magic = bytes;
    magic[0] = 'Z';
    CHECK_THROWS_AS(Checkpoint::parse(magic), IoError);

    auto version = bytes;
    version[4] = 2;
    try {
        Checkpoint::parse(version);
        FAIL("accepted a future version");
    } catch (const IoError& e) {
        CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("version"));
    }
    CHECK_THROWS_AS(Checkpoint::load("/nonexistent/dir/x.vxck"), IoError);
}
