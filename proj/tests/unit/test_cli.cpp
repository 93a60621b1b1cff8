#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "voxadv/commands.hpp"
#include "voxadv/data.hpp"
#include "voxadv/embedding.hpp"
#include "voxadv/error.hpp"
#include "voxadv/metrics.hpp"

using namespace voxadv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("voxadv_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

TrainConfig tiny(int k = 2, std::int64_t t_max = 4) {
    TrainConfig c = make_preset(Preset::synthetic);
    c.num_classes = k;
    c.base_channels = 2;
    c.fused_channels = 16;
    c.head_width = 16;
    c.per_class_cap = 16;
    c.patch_size = {16, 16, 16};
    c.t_max = t_max;
    c.lr_decay_step = t_max;
    c.seed = 5;
    return c;
}

fs::path tiny_data(const std::string& name, int k = 2) {
    const auto dir = scratch(name);
    std::ostringstream log;
    return cmd_generate({dir, 9, 6, 2, 16, k, false}, log);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(VOXADV_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config precedence is preset, file, environment, flags") {
    const auto dir = scratch("precedence");
    fs::create_directories(dir);
    std::ofstream(dir / "c.txt") << "alpha = 0.5\nbeta = 0.7\n";
    ::setenv("VOXADV_ALPHA", "0.3", 1);
    auto c = resolve_config(Preset::la, dir / "c.txt", {{"alpha", "0.2"}});
    CHECK(c.alpha == 0.2);
    CHECK(c.beta == 0.7);
    CHECK(c.lr == make_preset(Preset::la).lr);
    CHECK(resolve_config(Preset::la, dir / "c.txt", {}).alpha == 0.3);
    CHECK(resolve_config(Preset::la, dir / "c.txt", {}, false).alpha == 0.5);
    ::unsetenv("VOXADV_ALPHA");
    CHECK(resolve_config(Preset::la, std::nullopt, {}).alpha == make_preset(Preset::la).alpha);
    CHECK_THROWS(resolve_config(Preset::la, std::nullopt, {{"no_such_key", "1"}}));
}

TEST_CASE("generate writes the default dataset and refuses to overwrite") {
    const auto dir = scratch("gen");
    std::ostringstream log;
    const auto path = cmd_generate({dir, 7}, log);
    CHECK(log.str().find(path.string()) != std::string::npos);
    const auto m = load_manifest(path);
    CHECK(m.with_split(Split::train).size() == 40);
    CHECK(m.with_split(Split::test).size() == 10);
    CHECK(m.extent == Extent3{32, 32, 32});
    CHECK(m.num_classes == 2);
    CHECK_THROWS(cmd_generate({dir, 7}, log));

    const auto other = scratch("gen2");
    cmd_generate({other, 7}, log);
    for (const auto& e : fs::directory_iterator(dir)) CHECK(slurp(e.path()) == slurp(other / e.path().filename()));

    GenerateOptions k4{dir, 7, 4, 1, 16, 4, true};
    CHECK(load_manifest(cmd_generate(k4, log)).num_classes == 4);
}

TEST_CASE("ablation flags produce a pure supervised run") {
    const auto data = tiny_data("abl_data");
    auto cfg = tiny();
    cfg.alpha = cfg.beta = cfg.gamma_max = 0.0;
    std::ostringstream log;
    const auto out = scratch("abl_run");
    const auto s = cmd_train({data, out, cfg, 0.5}, log);
    CHECK(s.result.log.size() == 4);
    for (const auto& r : s.result.log) {
        CHECK(r.adversarial == 0.0);
        CHECK(r.feature == 0.0);
        CHECK(r.consistency == 0.0);
        CHECK(r.total == r.dice);
    }
    const auto rows = lines(slurp(out / "train_log.csv"));
    CHECK(rows.size() == 5);
    CHECK(rows[0] == loss_csv_header());
    CHECK(fs::exists(out / "checkpoints" / "final.vxck"));
    CHECK(fs::exists(out / "split.json"));
    CHECK(fs::exists(out / "run_info.json"));
}

TEST_CASE("the config snapshot is the effective config") {
    const auto data = tiny_data("snap_data");
    const auto out = scratch("snap_run");
    std::ostringstream log;
    auto cfg = tiny(2, 2);
    cfg.beta = 0.25;
    cmd_train({data, out, cfg, 0.5}, log);
    CHECK(slurp(out / "config.txt") == serialize_config(cfg));
    CHECK(parse_config(slurp(out / "config.txt")) == cfg);
}

TEST_CASE("a resumed run logs exactly what an uninterrupted run logs") {
    const auto data = tiny_data("resume_data");
    auto cfg = tiny(2, 6);
    cfg.checkpoint_every = 3;
    const auto a = scratch("resume_a"), b = scratch("resume_b");
    std::ostringstream log;
    cmd_train({data, a, cfg, 0.5}, log);
    fs::copy(a, b, fs::copy_options::recursive);
    TrainOptions again{data, {}, {}, 0.5};
    again.resume = b / "checkpoints" / "ckpt_000003.vxck";
    const auto s = cmd_train(again, log);
    CHECK(s.run_dir == b);
    CHECK(s.result.log.size() == 3);
    CHECK(slurp(b / "train_log.csv") == slurp(a / "train_log.csv"));
    CHECK(lines(slurp(b / "train_log.csv")).size() == 7);
    CHECK(slurp(b / "checkpoints" / "final.vxck") == slurp(a / "checkpoints" / "final.vxck"));
}

TEST_CASE("evaluation is repeatable and matches the metric schema") {
    const auto data = tiny_data("eval_data");
    const auto out = scratch("eval_run");
    std::ostringstream log;
    cmd_train({data, out, tiny(2, 2), 0.5}, log);
    const auto ck = out / "checkpoints" / "final.vxck";
    const auto e1 = cmd_eval({ck, data, out / "e1.csv"}, log);
    cmd_eval({ck, data, out / "e2.csv"}, log);
    CHECK(slurp(out / "e1.csv") == slurp(out / "e2.csv"));
    const auto rows = lines(slurp(out / "e1.csv"));
    CHECK(rows[0] == "case,dice,jaccard,hd95,assd");
    CHECK(rows.size() == 2 + 2);
    CHECK(rows.back().rfind("mean,", 0) == 0);
    CHECK(e1.cases.size() == 2);
    cmd_eval({ck, data, std::nullopt}, log);
    CHECK(fs::exists(out / "eval.csv"));

    const auto k4 = tiny_data("eval_k4", 4);
    CHECK_THROWS(cmd_eval({ck, k4, out / "bad.csv"}, log));
}

TEST_CASE("ground truth scored against itself is perfect") {
    const auto data = tiny_data("gt_data", 3);
    const auto m = load_manifest(data);
    std::vector<CaseEvaluation> cases;
    for (const auto* c : m.with_split(Split::test)) {
        const auto gt = read_mask(m.resolve(*c->mask), 3);
        cases.push_back({c->id, evaluate_case(gt, gt, {}, DistanceUnit::voxel)});
    }
    const auto e = summarize(cases, 3, DistanceUnit::voxel);
    CHECK(e.mean.mean.dsc == 100.0);
    CHECK(e.mean.mean.jaccard == 100.0);
    CHECK(*e.mean.mean.hd95 == 0.0);
    CHECK(*e.mean.mean.assd == 0.0);
    const auto rows = lines(evaluation_csv(e));
    CHECK(rows[0] == "case,dice,jaccard,hd95,assd,dice_1,dice_2");
    CHECK(rows.back() == "mean,100.0000,100.0000,0.0000,0.0000,100.0000,100.0000");
}

TEST_CASE("multiclass runs report per-class dice columns") {
    const auto data = tiny_data("k4_data", 4);
    const auto out = scratch("k4_run");
    std::ostringstream log;
    cmd_train({data, out, tiny(4, 2), 0.5}, log);
    cmd_eval({out / "checkpoints" / "final.vxck", data, std::nullopt}, log);
    const auto rows = lines(slurp(out / "eval.csv"));
    CHECK(rows[0] == "case,dice,jaccard,hd95,assd,dice_1,dice_2,dice_3");
}

TEST_CASE("embedding export covers both domains") {
    const auto data = tiny_data("emb_data");
    const auto out = scratch("emb_run");
    std::ostringstream log;
    cmd_train({data, out, tiny(2, 2), 0.5}, log);
    const auto s = cmd_export_embeddings({out / "checkpoints" / "final.vxck", data, std::nullopt, 20, 0.5}, log);
    CHECK(s.records <= 2u * 20u * 6u);
    CHECK(s.records > 0);
    const auto d = read_embedding_csv(s.dir / "embeddings.csv");
    CHECK(d.size() == s.records);
    bool lab = false, unl = false;
    for (auto dom : d.domains) (dom == Domain::labeled ? lab : unl) = true;
    CHECK(lab);
    CHECK(unl);
    CHECK(fs::exists(s.dir / "scatter.svg"));
    CHECK(fs::exists(s.dir / "summary.json"));
    const auto again = cmd_export_embeddings({out / "checkpoints" / "final.vxck", data, out / "again", 20, 0.5}, log);
    CHECK(slurp(again.dir / "embeddings.csv") == slurp(s.dir / "embeddings.csv"));
    CHECK(lines(slurp(s.dir / "embeddings.csv"))[0].rfind("case,domain,class,pc1,pc2,f0,", 0) == 0);
}

TEST_CASE("the executable validates its arguments") {
    const auto data = tiny_data("exe_data");
    const auto out = scratch("exe_run");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("train --data " + data.string() + " --out " + out.string() + " --set alpha=-1") == 2);
    CHECK(run_cli("train --data " + scratch("missing").string() + " --out " + out.string()) != 0);
    CHECK(run_cli("no-such-command") != 0);
    CHECK(run_cli("generate --out " + scratch("exe_gen").string() + " --train 2 --test 1 --size 16") == 0);
}
