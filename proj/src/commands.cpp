#include "voxadv/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "voxadv/embedding.hpp"
#include "voxadv/error.hpp"
#include "voxadv/run_directory.hpp"

namespace voxadv {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << s;
}

// Manifest copy whose case paths are absolute, so it stays valid outside the dataset directory.
DatasetManifest with_absolute_paths(DatasetManifest m) {
    const fs::path root = fs::absolute(m.root);
    for (auto& c : m.cases) {
        c.volume = (root / c.volume).lexically_normal().string();
        if (c.mask) c.mask = (root / *c.mask).lexically_normal().string();
    }
    return m;
}

void truncate_log(const fs::path& log, std::int64_t rows) {
    if (!fs::exists(log)) return;
    std::ifstream in(log);
    std::string kept, line;
    std::int64_t n = -1;
    while (n < rows && std::getline(in, line)) {
        kept += line + '\n';
        ++n;
    }
    in.close();
    write_text(log, kept);
}

}  // namespace

TrainConfig resolve_config(Preset preset, const std::optional<fs::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& settings, bool use_env) {
    TrainConfig cfg = make_preset(preset);
    if (file) cfg = load_config(*file, cfg);
    if (use_env) apply_env_overrides(cfg);
    for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
    return cfg;
}

fs::path manifest_file(const fs::path& data) {
    if (fs::is_directory(data)) return data / kManifestName;
    return data;
}

fs::path cmd_generate(const GenerateOptions& o, std::ostream& log) {
    prepare_output_dir(o.out, o.force);
    generate_synthetic(o.out, o.seed, o.n_train, o.n_test, o.size, o.classes);
    const fs::path manifest = o.out / kManifestName;
    log << manifest.string() << '\n';
    return manifest;
}

TrainSummary cmd_train(const TrainOptions& o, std::ostream& log) {
    TrainState<float> state;
    fs::path run_dir = o.out;
    if (o.resume) {
        state = load_checkpoint<float>(*o.resume);
        if (run_dir.empty()) run_dir = run_dir_of_checkpoint(*o.resume);
        truncate_log(run_dir / kTrainLogName, state.iteration);
    } else {
        require_valid(o.config);
        prepare_output_dir(run_dir, o.force);
        state = init_train_state<float>(o.config);
    }
    const TrainConfig& cfg = state.config;
    RunDirectory rd(run_dir);

    DatasetManifest m = load_manifest(manifest_file(o.data));
    if (m.num_classes != cfg.num_classes)
        throw ConfigError("class-count mismatch: config has " + std::to_string(cfg.num_classes) + ", manifest has " +
                          std::to_string(m.num_classes));
    m = make_split(m, o.labeled_fraction, cfg.seed, o.labeled_count);
    if (!o.resume) {
        rd.snapshot_config(cfg);
        save_manifest(run_dir / "split.json", with_absolute_paths(m));
        rd.stamp("split.json", cfg.seed, "labeled fraction " + std::to_string(o.labeled_fraction));
        rd.set_info("dataset", fs::absolute(manifest_file(o.data)).string());
    }
    const TrainingData data = load_training_data(m, cfg.preset);
    log << "training " << data.labeled.size() << " labeled + " << data.unlabeled.size() << " unlabeled cases, "
        << cfg.t_max << " iterations, seed " << cfg.seed << '\n';

    RunOptions opts;
    opts.out_dir = run_dir;
    const auto start = std::chrono::steady_clock::now();
    if (o.progress_every > 0) {
        opts.on_step = [&](const TrainState<float>& s, const LossReport& r, const StepDiagnostics& d) {
            if (s.iteration % o.progress_every != 0 && s.iteration != cfg.t_max) return;
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            char buf[200];
            std::snprintf(buf, sizeof buf, "it %lld  total %.4f  dice %.4f  adv %.4f  feat %.4f  cons %.5f  %s  %.0fs\n",
                          static_cast<long long>(s.iteration), r.total, r.dice, r.adversarial, r.feature, r.consistency,
                          d.branch_isolation_ok ? "" : "BRANCH-ISOLATION-FAIL", secs);
            log << buf << std::flush;
        };
    }
    TrainSummary summary{run_dir, run_training(state, data, opts)};
    rd.stamp(kTrainLogName, cfg.seed);
    rd.stamp(std::string("checkpoints/") + kFinalCheckpointName, cfg.seed);
    if (cfg.checkpoint_every > 0)
        for (std::int64_t it = cfg.checkpoint_every; it <= cfg.t_max; it += cfg.checkpoint_every)
            rd.stamp(fs::relative(checkpoint_path(run_dir, it), run_dir).string(), cfg.seed);
    log << "run directory: " << run_dir.string() << '\n';
    return summary;
}

Evaluation cmd_eval(const EvalOptions& o, std::ostream& log) {
    const TrainState<float> state = load_checkpoint<float>(o.checkpoint);
    const DatasetManifest m = load_manifest(manifest_file(o.data));
    const Evaluation e = evaluate_split(state.pair.student_backbone, m, state.config.preset, o.unit);
    const fs::path out = o.out.value_or(run_dir_of_checkpoint(o.checkpoint) / "eval.csv");
    write_text(out, evaluation_csv(e));
    if (!o.out) RunDirectory(run_dir_of_checkpoint(o.checkpoint)).stamp("eval.csv", state.config.seed, o.checkpoint.filename().string());
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu test cases  mean dice %.2f%%  jaccard %.2f%%\n", e.cases.size(), e.mean.mean.dsc,
                  e.mean.mean.jaccard);
    log << buf << "wrote " << out.string() << '\n';
    return e;
}

ExportSummary cmd_export_embeddings(const ExportOptions& o, std::ostream& log) {
    const TrainState<float> state = load_checkpoint<float>(o.checkpoint);
    DatasetManifest m = load_manifest(manifest_file(o.data));
    if (m.with_split(Split::labeled).empty()) m = make_split(m, o.labeled_fraction, state.config.seed);
    const fs::path run_dir = run_dir_of_checkpoint(o.checkpoint);
    const fs::path dir = o.out.value_or(run_dir / "embeddings" / o.checkpoint.stem());
    fs::create_directories(dir);

    ExportSummary s;
    s.dir = dir;
    const EmbeddingDump dump = collect_embeddings(state.pair.student_backbone, state.pair.student_fusion, m, state.config.preset,
                                                  o.n_per_class, derive_seed(state.config.seed, {0xe3b}), &s.warnings);
    for (const auto& w : s.warnings) log << "warning: " << w << '\n';
    if (dump.size() < 2) throw DomainError("too few sampled voxels to project");
    const Projection2D pca = fit_pca_2d(dump.features);
    const Matrix<double> coords = project(pca, dump.features);
    s.records = dump.size();
    s.fisher_projection = fisher_score(coords, dump.class_ids);
    s.fisher_features = fisher_score(dump.features, dump.class_ids);

    write_embedding_csv(dir / "embeddings.csv", dump, coords);
    char title[160];
    std::snprintf(title, sizeof title, "%s, iteration %lld, Fisher score %.3f", o.checkpoint.filename().string().c_str(),
                  static_cast<long long>(state.iteration), s.fisher_projection);
    write_text(dir / "scatter.svg", scatter_svg(coords, dump.class_ids, dump.domains, title));
    nlohmann::ordered_json j;
    j["checkpoint"] = fs::absolute(o.checkpoint).string();
    j["iteration"] = state.iteration;
    j["seed"] = state.config.seed;
    j["records"] = s.records;
    j["fisher_projection"] = s.fisher_projection;
    j["fisher_features"] = s.fisher_features;
    j["explained_variance"] = {pca.variance[0], pca.variance[1]};
    write_text(dir / "summary.json", j.dump(2) + "\n");

    std::error_code ec;
    const fs::path rel = fs::relative(dir, run_dir, ec);
    if (!ec && !rel.empty() && *rel.begin() != "..") {
        RunDirectory rd(run_dir);
        for (const char* f : {"embeddings.csv", "scatter.svg", "summary.json"}) rd.stamp((rel / f).string(), state.config.seed);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu records  Fisher score %.4f (projection), %.4f (features)\n", s.records,
                  s.fisher_projection, s.fisher_features);
    log << buf << "wrote " << dir.string() << '\n';
    return s;
}

}  // namespace voxadv
