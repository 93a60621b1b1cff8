#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "voxadv/config.hpp"

namespace voxadv {

/// Output root: $VOXADV_RUN_DIR when set, else `fallback`.
std::filesystem::path run_root(const std::filesystem::path& fallback = "runs");

/// Creates `dir`. A non-empty existing directory is an error unless `force`,
/// in which case its contents are removed.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

/// Applies VOXADV_<KEY> variables (key upper-cased) for every config key.
/// Returns the keys that were set.
std::vector<std::string> apply_env_overrides(TrainConfig& cfg,
                                             const std::function<const char*(const char*)>& getenv = nullptr);

/// Run directory layout:
///   config.txt        effective configuration
///   train_log.csv     one row per iteration
///   checkpoints/      ckpt_NNNNNN.vxck and final.vxck
///   eval.csv          metrics on the test split
///   embeddings/       feature dump, projection, scatter plot
///   run_info.json     artifact list with UTC timestamps and seeds
class RunDirectory {
public:
    explicit RunDirectory(std::filesystem::path dir) : dir_(std::move(dir)) {}

    [[nodiscard]] const std::filesystem::path& path() const { return dir_; }
    [[nodiscard]] std::filesystem::path config_path() const { return dir_ / "config.txt"; }

    /// Writes the config snapshot and stamps it.
    void snapshot_config(const TrainConfig& cfg) const;
    /// Records (or refreshes) `relative` in run_info.json with the current time and `seed`.
    void stamp(const std::string& relative, std::uint64_t seed, const std::string& note = {}) const;
    /// Sets a top-level string field of run_info.json.
    void set_info(const std::string& key, const std::string& value) const;

private:
    std::filesystem::path dir_;
};

/// Run directory owning `checkpoint` (the parent of a `checkpoints/` folder, else the file's folder).
std::filesystem::path run_dir_of_checkpoint(const std::filesystem::path& checkpoint);

}  // namespace voxadv
