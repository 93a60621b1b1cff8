#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "voxadv/config.hpp"
#include "voxadv/evaluation.hpp"
#include "voxadv/trainer.hpp"

namespace voxadv {

/// Preset defaults < config file < VOXADV_<KEY> environment < explicit settings.
TrainConfig resolve_config(Preset preset, const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& settings, bool use_env = true);

/// Accepts a manifest file or a directory containing manifest.json.
std::filesystem::path manifest_file(const std::filesystem::path& data);

struct GenerateOptions {
    std::filesystem::path out;
    std::uint64_t seed = 0;
    int n_train = 40;
    int n_test = 10;
    int size = 32;
    int classes = 2;
    bool force = false;
};

/// Writes a synthetic dataset; returns the manifest path.
std::filesystem::path cmd_generate(const GenerateOptions& o, std::ostream& log);

struct TrainOptions {
    std::filesystem::path data;
    std::filesystem::path out;
    TrainConfig config;
    double labeled_fraction = 0.1;
    std::optional<int> labeled_count;
    bool force = false;
    std::optional<std::filesystem::path> resume;
    int progress_every = 100;  // 0 disables progress lines
};

struct TrainSummary {
    std::filesystem::path run_dir;
    RunResult result;
};

TrainSummary cmd_train(const TrainOptions& o, std::ostream& log);

struct EvalOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::optional<std::filesystem::path> out;  // default: <run dir>/eval.csv
    DistanceUnit unit = DistanceUnit::voxel;
};

Evaluation cmd_eval(const EvalOptions& o, std::ostream& log);

struct ExportOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path data;  // a split manifest; unsplit manifests are split with the checkpoint seed
    std::optional<std::filesystem::path> out;  // default: <run dir>/embeddings/<checkpoint stem>
    int n_per_class = 100;
    double labeled_fraction = 0.1;
};

struct ExportSummary {
    std::filesystem::path dir;
    std::size_t records = 0;
    double fisher_projection = 0.0;
    double fisher_features = 0.0;
    std::vector<std::string> warnings;
};

ExportSummary cmd_export_embeddings(const ExportOptions& o, std::ostream& log);

}  // namespace voxadv
