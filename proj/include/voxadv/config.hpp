#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voxadv/tensor.hpp"

namespace voxadv {

enum class Preset { la, mo, synthetic };
enum class OptimizerKind { sgd, adam };

std::string to_string(Preset p);
Preset parse_preset(const std::string& s);

/// Every knob of a training run. Serialises to a flat `key = value` file.
struct TrainConfig {
    Preset preset = Preset::synthetic;

    // Loss weights: total = alpha*adv + beta*feature + gamma(t)*consistency + dice.
    double alpha = 0.01;
    double beta = 0.1;
    double gamma_max = 0.001;

    double lambda_ema = 0.99;
    double threshold_t = 0.7;
    std::int64_t t_max = 2000;
    int batch_labeled = 2;
    int batch_unlabeled = 2;

    OptimizerKind student_optimizer = OptimizerKind::sgd;
    double lr = 0.01;
    std::int64_t lr_decay_step = 833;
    double lr_decay_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;

    double disc_lr = 2e-4;
    double disc_beta1 = 0.5;
    double disc_beta2 = 0.999;
    int disc_steps = 1;  // discriminator updates per student update

    Extent3 patch_size{32, 32, 32};
    int num_classes = 2;
    int base_channels = 4;
    int fused_channels = 64;
    int head_width = 64;
    int per_class_cap = 256;
    bool flip_augment = true;

    std::int64_t checkpoint_every = 0;  // 0: final checkpoint only
    std::uint64_t seed = 0;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Paper-derived defaults for each dataset style.
TrainConfig make_preset(Preset p);

struct ConfigReport {
    std::vector<std::string> violations;
    [[nodiscard]] bool ok() const { return violations.empty(); }
    [[nodiscard]] std::string summary() const;
};

ConfigReport validate_config(const TrainConfig& cfg);
/// Returns cfg unchanged or throws ConfigError carrying the full report.
const TrainConfig& require_valid(const TrainConfig& cfg);

/// Applies one `key = value` assignment; unknown keys and unparsable values throw ConfigError.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

std::string serialize_config(const TrainConfig& cfg);
/// Parses on top of `base`; `#` starts a comment, blank lines are ignored.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
void save_config(const std::filesystem::path& path, const TrainConfig& cfg);

/// All keys in serialisation order.
const std::vector<std::string>& config_keys();

}  // namespace voxadv
