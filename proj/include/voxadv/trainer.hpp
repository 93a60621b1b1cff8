#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "voxadv/checkpoint.hpp"
#include "voxadv/config.hpp"
#include "voxadv/data.hpp"
#include "voxadv/discriminator.hpp"
#include "voxadv/objectives.hpp"
#include "voxadv/optim.hpp"
#include "voxadv/teacher_student.hpp"

namespace voxadv {

template <typename T>
struct OptimizerState {
    OptimizerSlot<T> backbone;
    OptimizerSlot<T> fusion;
    OptimizerSlot<T> projection;
    OptimizerSlot<T> prediction;
    OptimizerSlot<T> discriminator;
};

template <typename T>
struct TrainState {
    TrainConfig config;
    ModelPair<T> pair;
    DiscriminatorParams<T> disc;
    OptimizerState<T> opt;
    std::int64_t iteration = 0;
};

/// Fresh state from config.seed: model pair, discriminator and zeroed optimiser memory.
template <typename T>
TrainState<T> init_train_state(const TrainConfig& cfg);

/// Volumes of one step. Labeled volumes carry masks; unlabeled ones never do.
struct StepBatch {
    std::vector<Volume> labeled;
    std::vector<LabelMask> masks;
    std::vector<Volume> unlabeled;
};

struct StepDiagnostics {
    std::size_t real_samples = 0;
    std::size_t fake_samples = 0;
    int empty_pseudo_volumes = 0;
    bool adversarial_skipped = false;
    /// Classes with no real and no fake vector in the discriminator step.
    std::vector<int> absent_classes;
    /// Largest |gradient| over the branch weights of absent classes; must be exactly 0.
    double absent_branch_grad = 0.0;
    bool branch_isolation_ok = true;
    std::uint64_t disc_hash_before_student = 0;
    std::uint64_t disc_hash_after_student = 0;
    std::uint64_t student_hash_before_disc = 0;
    std::uint64_t student_hash_after_disc = 0;
    std::vector<std::string> events;
};

/// One optimisation step: forward passes, pseudo-labels, dice, consistency,
/// feature and generator losses, student update, discriminator update, EMA,
/// iteration increment. Terms whose weight is zero are not computed and are
/// reported as 0.
template <typename T>
LossReport train_step(TrainState<T>& state, const StepBatch& batch, StepDiagnostics* diag = nullptr);

/// Hash over every student parameter set (backbone, fusion, projection, prediction).
template <typename T>
std::uint64_t student_hash(const TrainState<T>& s);

template <typename T>
Checkpoint to_checkpoint(const TrainState<T>& s);
/// Throws IoError if the checkpoint was written with another scalar type or lacks entries.
template <typename T>
TrainState<T> from_checkpoint(const Checkpoint& ck);
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const TrainState<T>& s);
template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& path);

/// Student inference on one volume.
template <typename T>
SoftPrediction<T> predict(const BackboneParams<T>& student, const Volume& v);

/// Preprocessed training volumes held in memory.
struct TrainingData {
    std::vector<Volume> labeled;
    std::vector<LabelMask> masks;
    std::vector<Volume> unlabeled;
};

/// Loads labeled (with masks) and unlabeled cases; masks of unlabeled cases are never read.
TrainingData load_training_data(const DatasetManifest& m, Preset preset);

/// Batch of iteration `it`: case choice, crop and flips depend only on (seed, it).
StepBatch sample_batch(const TrainingData& data, const TrainConfig& cfg, std::int64_t it);

struct RunOptions {
    std::filesystem::path out_dir;  // log and checkpoints; empty disables file output
    std::function<void(const TrainState<float>&, const LossReport&, const StepDiagnostics&)> on_step;
};

struct RunResult {
    std::vector<LossReport> log;
    std::int64_t branch_isolation_failures = 0;
    std::int64_t skipped_adversarial_steps = 0;
};

inline constexpr const char* kTrainLogName = "train_log.csv";
std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::int64_t iteration);
inline constexpr const char* kFinalCheckpointName = "final.vxck";

/// Runs from state.iteration to config.t_max, writing the CSV log and
/// checkpoints (every config.checkpoint_every iterations and at the end).
RunResult run_training(TrainState<float>& state, const TrainingData& data, const RunOptions& opts);

}  // namespace voxadv
