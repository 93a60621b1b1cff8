#include <iostream>

#include "CLI11.hpp"
#include "voxadv/commands.hpp"
#include "voxadv/error.hpp"
#include "voxadv/run_directory.hpp"

namespace fs = std::filesystem;
using namespace voxadv;

int main(int argc, char** argv) {
    CLI::App app{"voxel-wise adversarial semi-supervised segmentation"};
    app.require_subcommand(1);

    GenerateOptions gen;
    std::string gen_out;
    auto* g = app.add_subcommand("generate", "write a synthetic dataset and manifest");
    g->add_option("--out", gen_out, "dataset directory (default $VOXADV_RUN_DIR/data)");
    g->add_option("--seed", gen.seed, "generation seed");
    g->add_option("--train", gen.n_train, "training cases")->check(CLI::NonNegativeNumber);
    g->add_option("--test", gen.n_test, "test cases")->check(CLI::NonNegativeNumber);
    g->add_option("--size", gen.size, "edge length, multiple of 8");
    g->add_option("--classes", gen.classes, "number of classes including background");
    g->add_flag("--force", gen.force, "overwrite a non-empty directory");

    std::string data, config_file, preset_name = "synthetic", out, resume;
    std::optional<std::uint64_t> seed;
    std::optional<int> labeled_count, classes;
    double labeled_fraction = 0.1;
    bool no_adv = false, no_feature = false, no_consistency = false, force = false;
    std::vector<std::string> sets;
    auto* t = app.add_subcommand("train", "train a model; writes a run directory");
    t->add_option("--data", data, "dataset directory or manifest")->required();
    t->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    t->add_option("--preset", preset_name, "la, mo or synthetic")->check(CLI::IsMember({"la", "mo", "synthetic"}));
    t->add_option("--seed", seed, "training seed");
    t->add_option("--classes", classes, "number of classes");
    t->add_option("--labeled-fraction", labeled_fraction, "fraction of training cases with labels");
    t->add_option("--labeled-count", labeled_count, "exact labeled case count (overrides the fraction rule)");
    t->add_flag("--no-adv", no_adv, "alpha = 0");
    t->add_flag("--no-feature", no_feature, "beta = 0");
    t->add_flag("--no-consistency", no_consistency, "gamma_max = 0");
    t->add_option("--set", sets, "config override key=value (repeatable)");
    t->add_option("--out", out, "run directory (default $VOXADV_RUN_DIR/train-s<seed>)");
    t->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
    t->add_flag("--force", force, "overwrite a non-empty run directory");

    EvalOptions ev;
    std::string eval_out, unit = "voxel";
    auto* e = app.add_subcommand("eval", "evaluate the student on the test split");
    e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    e->add_option("--data", ev.data, "dataset directory or manifest")->required();
    e->add_option("--out", eval_out, "CSV path (default <run dir>/eval.csv)");
    e->add_option("--unit", unit, "distance unit")->check(CLI::IsMember({"voxel", "mm"}));

    ExportOptions ex;
    std::string ex_out;
    auto* x = app.add_subcommand("export-embeddings", "dump fused voxel features, 2D projection and scatter plot");
    x->add_option("--checkpoint", ex.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    x->add_option("--data", ex.data, "split manifest (split.json in the run directory) or dataset")->required();
    x->add_option("--n-per-class", ex.n_per_class, "voxels per class per case");
    x->add_option("--labeled-fraction", ex.labeled_fraction, "used when the manifest has no split");
    x->add_option("--out", ex_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (g->parsed()) {
            gen.out = gen_out.empty() ? run_root(".") / "data" : fs::path(gen_out);
            cmd_generate(gen, std::cout);
        } else if (t->parsed()) {
            TrainOptions o;
            o.data = data;
            o.labeled_fraction = labeled_fraction;
            o.labeled_count = labeled_count;
            o.force = force;
            if (!resume.empty()) o.resume = fs::path(resume);
            std::vector<std::pair<std::string, std::string>> settings;
            for (const auto& s : sets) {
                const auto eq = s.find('=');
                if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
                settings.emplace_back(s.substr(0, eq), s.substr(eq + 1));
            }
            if (seed) settings.emplace_back("seed", std::to_string(*seed));
            if (classes) settings.emplace_back("num_classes", std::to_string(*classes));
            if (no_adv) settings.emplace_back("alpha", "0");
            if (no_feature) settings.emplace_back("beta", "0");
            if (no_consistency) settings.emplace_back("gamma_max", "0");
            std::optional<fs::path> file;
            if (!config_file.empty()) file = fs::path(config_file);
            o.config = resolve_config(parse_preset(preset_name), file, settings);
            const ConfigReport report = validate_config(o.config);
            if (!report.ok()) {
                for (const auto& v : report.violations) std::cerr << "config: " << v << '\n';
                return 2;
            }
            if (!o.resume) o.out = out.empty() ? run_root() / ("train-s" + std::to_string(o.config.seed)) : fs::path(out);
            else if (!out.empty()) o.out = out;
            cmd_train(o, std::cout);
        } else if (e->parsed()) {
            if (!eval_out.empty()) ev.out = fs::path(eval_out);
            ev.unit = unit == "mm" ? DistanceUnit::mm : DistanceUnit::voxel;
            cmd_eval(ev, std::cout);
        } else if (x->parsed()) {
            if (!ex_out.empty()) ex.out = fs::path(ex_out);
            cmd_export_embeddings(ex, std::cout);
        }
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return 0;
}
