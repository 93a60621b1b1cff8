#include "voxadv/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "voxadv/error.hpp"

namespace voxadv {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTagLabeledSamples = 1;
constexpr std::uint64_t kTagUnlabeledSamples = 2;
constexpr std::uint64_t kTagDiscriminator = 4;
constexpr std::uint64_t kTagBatch = 0xba7c;

OptimizerSettings student_settings(const TrainConfig& c) {
    OptimizerSettings s;
    s.kind = c.student_optimizer;
    s.momentum = c.momentum;
    s.weight_decay = c.weight_decay;
    s.beta1 = c.adam_beta1;
    s.beta2 = c.adam_beta2;
    return s;
}

OptimizerSettings disc_settings(const TrainConfig& c) {
    OptimizerSettings s;
    s.kind = OptimizerKind::adam;
    s.weight_decay = 0.0;
    s.beta1 = c.disc_beta1;
    s.beta2 = c.disc_beta2;
    return s;
}

template <typename T>
VoxelFeatureBatch<T> make_batch(Matrix<T> vectors, const std::vector<VoxelSample>& samples, Domain domain, int source) {
    VoxelFeatureBatch<T> b;
    b.vectors = std::move(vectors);
    for (const auto& s : samples) {
        b.class_ids.push_back(s.class_id);
        b.domain.push_back(domain);
        b.positions.push_back(s.voxel);
        b.sources.push_back(source);
    }
    return b;
}

std::vector<std::size_t> voxels_of(const std::vector<VoxelSample>& samples) {
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.voxel);
    return out;
}

template <typename T>
Matrix<T> slice_rows(const Matrix<T>& m, std::size_t first, std::size_t count) {
    Matrix<T> out(count, m.cols());
    std::copy(m.data() + first * m.cols(), m.data() + (first + count) * m.cols(), out.data());
    return out;
}

template <typename T>
void add_scaled(Tensor<T>& dst, const Tensor<T>& src, double scale) {
    if (dst.empty()) dst = Tensor<T>(src.channels(), src.extent());
    auto d = dst.values();
    auto s = src.values();
    const T k = static_cast<T>(scale);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * s[i];
}

// Per-volume scratch of the student update.
template <typename T>
struct VolumeWork {
    BackboneTape<T> tape;
    BackboneOutput<T> student;
    std::optional<BackboneOutput<T>> teacher;
    Tensor<T> dprobs;
    std::array<Tensor<T>, 4> dpyramid;
    std::vector<VoxelSample> samples;
    FusionTape<T> fusion_tape;
    Matrix<T> fused;
    Matrix<T> dfused;
};

}  // namespace

template <typename T>
TrainState<T> init_train_state(const TrainConfig& cfg) {
    require_valid(cfg);
    TrainState<T> s;
    s.config = cfg;
    s.pair = init_model_pair<T>(cfg.seed, cfg.base_channels, cfg.num_classes, cfg.fused_channels, cfg.head_width);
    s.disc = init_discriminator<T>(derive_seed(cfg.seed, {kTagDiscriminator}), cfg.fused_channels, cfg.num_classes);
    s.opt.backbone = OptimizerSlot<T>::for_params(s.pair.student_backbone.weights);
    s.opt.fusion = OptimizerSlot<T>::for_params(s.pair.student_fusion.weights);
    s.opt.projection = OptimizerSlot<T>::for_params(s.pair.heads.student_projection);
    s.opt.prediction = OptimizerSlot<T>::for_params(s.pair.heads.student_prediction);
    s.opt.discriminator = OptimizerSlot<T>::for_params(s.disc.weights);
    return s;
}

template <typename T>
std::uint64_t student_hash(const TrainState<T>& s) {
    std::uint64_t h = hash_params(s.pair.student_backbone.weights);
    h = mix64(h ^ hash_params(s.pair.student_fusion.weights));
    h = mix64(h ^ hash_params(s.pair.heads.student_projection));
    return mix64(h ^ hash_params(s.pair.heads.student_prediction));
}

template <typename T>
LossReport train_step(TrainState<T>& s, const StepBatch& batch, StepDiagnostics* diag) {
    const TrainConfig& cfg = s.config;
    const std::int64_t it = s.iteration;
    const auto uit = static_cast<std::uint64_t>(it);
    const int K = cfg.num_classes;
    const std::size_t nL = batch.labeled.size();
    const std::size_t nU = batch.unlabeled.size();
    if (nL == 0) throw DomainError("train_step needs at least one labeled volume");
    if (batch.masks.size() != nL) throw ShapeError("train_step: one mask per labeled volume required");
    for (const auto& m : batch.masks)
        if (m.num_classes != K) throw DomainError("train_step: mask class count differs from config");

    StepDiagnostics local;
    StepDiagnostics& dg = diag ? *diag : local;
    dg = StepDiagnostics{};

    const bool use_feat = cfg.beta > 0.0;
    const bool use_adv = cfg.alpha > 0.0 && nU > 0;
    const bool use_cons = cfg.gamma_max > 0.0;
    const double gamma_t = use_cons ? consistency_weight(it, cfg.t_max, cfg.gamma_max) : 0.0;
    const bool use_unlabeled = nU > 0 && (use_adv || use_cons);
    const bool need_teacher = use_feat || use_adv || use_cons;
    const std::size_t n = nL + (use_unlabeled ? nU : 0);

    auto& student = s.pair.student_backbone;
    auto& fusion = s.pair.student_fusion;

    // Forward passes.
    std::vector<VolumeWork<T>> work(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Volume& v = i < nL ? batch.labeled[i] : batch.unlabeled[i - nL];
        const Tensor<T> x = v.voxels.template cast<T>();
        work[i].student = backbone_forward(student, x, &work[i].tape);
        if (need_teacher) work[i].teacher = backbone_forward(s.pair.teacher_backbone, x);
    }

    // Pseudo-labels on unlabeled volumes.
    std::vector<LabelMask> pseudo;
    double valid_fraction = 0.0;
    if (use_unlabeled) {
        for (std::size_t j = 0; j < nU; ++j) {
            pseudo.push_back(pseudo_label(work[nL + j].teacher->prediction, cfg.threshold_t));
            valid_fraction += static_cast<double>(pseudo.back().valid_count()) / static_cast<double>(pseudo.back().labels.size());
        }
        valid_fraction /= static_cast<double>(nU);
    }

    LossParts parts;

    for (std::size_t i = 0; i < nL; ++i) {
        parts.dice += dice_loss(work[i].student.prediction, batch.masks[i]) / static_cast<double>(nL);
        add_scaled(work[i].dprobs, dice_loss_grad(work[i].student.prediction, batch.masks[i]), 1.0 / static_cast<double>(nL));
    }

    if (use_cons) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto& tp = work[i].teacher->prediction;
            const auto& sp = work[i].student.prediction;
            parts.consistency += consistency_loss(tp, sp) / static_cast<double>(n);
            add_scaled(work[i].dprobs, consistency_loss_grad(tp, sp), gamma_t / static_cast<double>(n));
        }
    }

    // Labeled voxel features: feature-loss pairs and the discriminator's real set.
    VoxelFeatureBatch<T> real;
    ParamSet<T> fusion_grads = fusion.weights.zeros_like();
    ParamSet<T> proj_grads = s.pair.heads.student_projection.zeros_like();
    ParamSet<T> pred_grads = s.pair.heads.student_prediction.zeros_like();
    if (use_feat || use_adv) {
        VoxelFeatureBatch<T> teacher_batch;
        for (std::size_t i = 0; i < nL; ++i) {
            auto& w = work[i];
            w.samples = sample_voxel_positions(batch.masks[i], cfg.per_class_cap,
                                               derive_seed(cfg.seed, {uit, i, kTagLabeledSamples}));
            const auto pos = voxels_of(w.samples);
            w.fused = fuse_at(w.student.pyramid, fusion, pos, &w.fusion_tape);
            real.append(make_batch(w.fused, w.samples, Domain::labeled, static_cast<int>(i)));
            if (use_feat)
                teacher_batch.append(make_batch(fuse_at(w.teacher->pyramid, s.pair.teacher_fusion, pos), w.samples,
                                                Domain::labeled, static_cast<int>(i)));
        }
        if (use_feat && !real.empty()) {
            RepresentationTape<T> rtape;
            const auto out = representation_forward(s.pair.heads, real, teacher_batch, &rtape);
            parts.feature = feature_loss(out.student, out.teacher);
            Matrix<T> g = feature_loss_grad(out.student, out.teacher);
            for (auto& v : g.values()) v *= static_cast<T>(cfg.beta);
            Matrix<T> dfeat;
            representation_backward(s.pair.heads, rtape, g, proj_grads, pred_grads, &dfeat);
            std::size_t off = 0;
            for (std::size_t i = 0; i < nL; ++i) {
                work[i].dfused = slice_rows(dfeat, off, work[i].samples.size());
                off += work[i].samples.size();
            }
        }
    }

    // Unlabeled voxel features routed by pseudo-label class; generator loss.
    VoxelFeatureBatch<T> fake;
    if (use_adv) {
        for (std::size_t j = 0; j < nU; ++j) {
            auto& w = work[nL + j];
            if (pseudo[j].valid_count() == 0) {
                ++dg.empty_pseudo_volumes;
                dg.events.push_back("unlabeled volume " + std::to_string(j) + ": no valid pseudo-labels");
                continue;
            }
            w.samples = sample_voxel_positions(pseudo[j], cfg.per_class_cap,
                                               derive_seed(cfg.seed, {uit, j, kTagUnlabeledSamples}));
            w.fused = fuse_at(w.student.pyramid, fusion, voxels_of(w.samples), &w.fusion_tape);
            fake.append(make_batch(w.fused, w.samples, Domain::unlabeled, static_cast<int>(j)));
        }
        if (fake.empty() || real.empty()) {
            dg.adversarial_skipped = true;
            dg.events.push_back("adversarial terms skipped: empty real or fake set");
        } else {
            DiscriminatorTape<T> dtape;
            const auto scores = discriminate(s.disc, fake, &dtape);
            parts.adversarial = generator_adversarial_loss(scores);
            auto ds = generator_adversarial_loss_grad(scores);
            for (double& v : ds) v *= cfg.alpha;
            Matrix<T> dfake;
            discriminate_backward(s.disc, dtape, ds, static_cast<ParamSet<T>*>(nullptr), &dfake);
            std::size_t off = 0;
            for (std::size_t j = 0; j < nU; ++j) {
                auto& w = work[nL + j];
                if (w.samples.empty()) continue;
                w.dfused = slice_rows(dfake, off, w.samples.size());
                off += w.samples.size();
            }
        }
    } else if (cfg.alpha > 0.0) {
        dg.adversarial_skipped = true;
    }
    dg.real_samples = real.size();
    dg.fake_samples = fake.size();
    const bool disc_active = use_adv && !dg.adversarial_skipped;

    LossReport report = total_loss(parts, cfg.alpha, cfg.beta, gamma_t);
    report.iteration = it;
    report.lr = lr_at(it, cfg);
    report.gamma_t = gamma_t;
    report.valid_pseudo_fraction = valid_fraction;

    // Student backward and update.
    ParamSet<T> backbone_grads = student.weights.zeros_like();
    for (auto& w : work) {
        if (w.dfused.rows() > 0) fuse_at_backward(w.student.pyramid, fusion, w.fusion_tape, w.dfused, fusion_grads, w.dpyramid);
        std::array<const Tensor<T>*, 4> dp{};
        bool any = !w.dprobs.empty();
        for (int l = 0; l < 4; ++l) {
            if (!w.dpyramid[static_cast<std::size_t>(l)].empty()) {
                dp[static_cast<std::size_t>(l)] = &w.dpyramid[static_cast<std::size_t>(l)];
                any = true;
            }
        }
        if (any) backbone_backward(student, w.tape, w.dprobs.empty() ? nullptr : &w.dprobs, dp, backbone_grads);
    }

    dg.disc_hash_before_student = hash_params(s.disc.weights);
    const OptimizerSettings ss = student_settings(cfg);
    optimizer_step(ss, report.lr, student.weights, backbone_grads, s.opt.backbone);
    if (use_feat || disc_active) optimizer_step(ss, report.lr, fusion.weights, fusion_grads, s.opt.fusion);
    if (use_feat) {
        optimizer_step(ss, report.lr, s.pair.heads.student_projection, proj_grads, s.opt.projection);
        optimizer_step(ss, report.lr, s.pair.heads.student_prediction, pred_grads, s.opt.prediction);
    }
    dg.disc_hash_after_student = hash_params(s.disc.weights);

    // Discriminator update on the detached pre-update features.
    dg.student_hash_before_disc = student_hash(s);
    if (disc_active) {
        std::vector<char> present(static_cast<std::size_t>(K), 0);
        for (int c : real.class_ids) present[static_cast<std::size_t>(c)] = 1;
        for (int c : fake.class_ids) present[static_cast<std::size_t>(c)] = 1;
        for (int c = 0; c < K; ++c)
            if (!present[static_cast<std::size_t>(c)]) dg.absent_classes.push_back(c);

        const OptimizerSettings ds = disc_settings(cfg);
        for (int k = 0; k < cfg.disc_steps; ++k) {
            ParamSet<T> g = s.disc.weights.zeros_like();
            DiscriminatorTape<T> tr, tf;
            const auto sr = discriminate(s.disc, real, &tr);
            const auto sf = discriminate(s.disc, fake, &tf);
            std::vector<double> dr, df;
            discriminator_loss_grad(sr, sf, dr, df);
            discriminate_backward(s.disc, tr, dr, &g, static_cast<Matrix<T>*>(nullptr));
            discriminate_backward(s.disc, tf, df, &g, static_cast<Matrix<T>*>(nullptr));
            const std::size_t hidden = static_cast<std::size_t>(s.disc.hidden_width);
            for (int c : dg.absent_classes) {
                const auto cu = static_cast<std::size_t>(c);
                for (std::size_t h = 0; h < hidden; ++h)
                    dg.absent_branch_grad = std::max(dg.absent_branch_grad, std::abs(static_cast<double>(g[kBranchW].values[cu * hidden + h])));
                dg.absent_branch_grad = std::max(dg.absent_branch_grad, std::abs(static_cast<double>(g[kBranchB].values[cu])));
            }
            optimizer_step(ds, cfg.disc_lr, s.disc.weights, g, s.opt.discriminator);
        }
        dg.branch_isolation_ok = dg.absent_branch_grad == 0.0;
    }
    dg.student_hash_after_disc = student_hash(s);

    ema_update(s.pair, cfg.lambda_ema);
    ++s.iteration;
    return report;
}

template <typename T>
Checkpoint to_checkpoint(const TrainState<T>& s) {
    Checkpoint ck;
    ck.put_text("meta/scalar", sizeof(T) == 4 ? "f32" : "f64");
    ck.put_text("meta/config", serialize_config(s.config));
    ck.put_int("meta/iteration", s.iteration);
    ck.put_int("meta/seed", static_cast<std::int64_t>(s.config.seed));
    ck.put_params("student/backbone", s.pair.student_backbone.weights);
    ck.put_params("student/fusion", s.pair.student_fusion.weights);
    ck.put_params("student/projection", s.pair.heads.student_projection);
    ck.put_params("student/prediction", s.pair.heads.student_prediction);
    ck.put_params("teacher/backbone", s.pair.teacher_backbone.weights);
    ck.put_params("teacher/fusion", s.pair.teacher_fusion.weights);
    ck.put_params("teacher/projection", s.pair.heads.teacher_projection);
    ck.put_params("disc", s.disc.weights);
    auto put_slot = [&ck](const std::string& name, const OptimizerSlot<T>& slot) {
        ck.put_params("opt/" + name + "/first", slot.first);
        ck.put_params("opt/" + name + "/second", slot.second);
        ck.put_int("opt/" + name + "/steps", slot.steps);
    };
    put_slot("backbone", s.opt.backbone);
    put_slot("fusion", s.opt.fusion);
    put_slot("projection", s.opt.projection);
    put_slot("prediction", s.opt.prediction);
    put_slot("disc", s.opt.discriminator);
    return ck;
}

template <typename T>
TrainState<T> from_checkpoint(const Checkpoint& ck) {
    const std::string want = sizeof(T) == 4 ? "f32" : "f64";
    if (ck.get_text("meta/scalar") != want) throw IoError("checkpoint scalar type is " + ck.get_text("meta/scalar") + ", expected " + want);
    const TrainConfig cfg = parse_config(ck.get_text("meta/config"));
    TrainState<T> s = init_train_state<T>(cfg);
    s.iteration = ck.get_int("meta/iteration");
    if (static_cast<std::uint64_t>(ck.get_int("meta/seed")) != cfg.seed) throw IoError("checkpoint seed disagrees with its config");
    ck.get_params("student/backbone", s.pair.student_backbone.weights);
    ck.get_params("student/fusion", s.pair.student_fusion.weights);
    ck.get_params("student/projection", s.pair.heads.student_projection);
    ck.get_params("student/prediction", s.pair.heads.student_prediction);
    ck.get_params("teacher/backbone", s.pair.teacher_backbone.weights);
    ck.get_params("teacher/fusion", s.pair.teacher_fusion.weights);
    ck.get_params("teacher/projection", s.pair.heads.teacher_projection);
    ck.get_params("disc", s.disc.weights);
    auto get_slot = [&ck](const std::string& name, OptimizerSlot<T>& slot) {
        ck.get_params("opt/" + name + "/first", slot.first);
        ck.get_params("opt/" + name + "/second", slot.second);
        slot.steps = ck.get_int("opt/" + name + "/steps");
    };
    get_slot("backbone", s.opt.backbone);
    get_slot("fusion", s.opt.fusion);
    get_slot("projection", s.opt.projection);
    get_slot("prediction", s.opt.prediction);
    get_slot("disc", s.opt.discriminator);
    return s;
}

template <typename T>
void save_checkpoint(const fs::path& path, const TrainState<T>& s) {
    to_checkpoint(s).save(path);
}

template <typename T>
TrainState<T> load_checkpoint(const fs::path& path) {
    return from_checkpoint<T>(Checkpoint::load(path));
}

template <typename T>
SoftPrediction<T> predict(const BackboneParams<T>& student, const Volume& v) {
    return backbone_forward(student, v).prediction;
}

#define VOXADV_INSTANTIATE(T)                                                                        \
    template TrainState<T> init_train_state<T>(const TrainConfig&);                                  \
    template std::uint64_t student_hash(const TrainState<T>&);                                       \
    template LossReport train_step(TrainState<T>&, const StepBatch&, StepDiagnostics*);             \
    template Checkpoint to_checkpoint(const TrainState<T>&);                                         \
    template TrainState<T> from_checkpoint<T>(const Checkpoint&);                                    \
    template void save_checkpoint(const fs::path&, const TrainState<T>&);                            \
    template TrainState<T> load_checkpoint<T>(const fs::path&);                                      \
    template SoftPrediction<T> predict(const BackboneParams<T>&, const Volume&);
VOXADV_INSTANTIATE(float)
VOXADV_INSTANTIATE(double)
#undef VOXADV_INSTANTIATE

TrainingData load_training_data(const DatasetManifest& m, Preset preset) {
    const auto labeled = m.with_split(Split::labeled);
    if (labeled.empty()) throw DomainError("manifest has no labeled cases; assign a split first");
    TrainingData d;
    for (const CaseEntry* c : labeled) {
        Volume v = preprocess(read_volume(m.resolve(c->volume)), preset);
        LabelMask mask = read_mask(m.resolve(*c->mask), m.num_classes);
        if (!(mask.extent == v.extent())) mask = resample_nearest(mask, v.extent());
        d.labeled.push_back(std::move(v));
        d.masks.push_back(std::move(mask));
    }
    for (const CaseEntry* c : m.with_split(Split::unlabeled))
        d.unlabeled.push_back(preprocess(read_volume(m.resolve(c->volume)), preset));
    return d;
}

namespace {

std::vector<std::size_t> choose(std::size_t available, int count, Rng& rng) {
    std::vector<std::size_t> out;
    if (available == 0 || count <= 0) return out;
    const auto k = static_cast<std::size_t>(count);
    if (available >= k) {
        std::vector<std::size_t> idx(available);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(available - i)]);
        out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
        for (std::size_t i = 0; i < k; ++i) out.push_back(rng.index(available));
    }
    return out;
}

}  // namespace

StepBatch sample_batch(const TrainingData& data, const TrainConfig& cfg, std::int64_t it) {
    Rng rng(derive_seed(cfg.seed, {kTagBatch, static_cast<std::uint64_t>(it)}));
    StepBatch b;
    for (std::size_t i : choose(data.labeled.size(), cfg.batch_labeled, rng)) {
        Patch p = augment_patch(data.labeled[i], &data.masks[i], cfg.patch_size, cfg.flip_augment, rng);
        b.labeled.push_back(std::move(p.volume));
        b.masks.push_back(std::move(*p.mask));
    }
    for (std::size_t i : choose(data.unlabeled.size(), cfg.batch_unlabeled, rng))
        b.unlabeled.push_back(augment_patch(data.unlabeled[i], nullptr, cfg.patch_size, cfg.flip_augment, rng).volume);
    return b;
}

fs::path checkpoint_path(const fs::path& out_dir, std::int64_t iteration) {
    char name[48];
    std::snprintf(name, sizeof name, "ckpt_%06lld.vxck", static_cast<long long>(iteration));
    return out_dir / "checkpoints" / name;
}

RunResult run_training(TrainState<float>& state, const TrainingData& data, const RunOptions& opts) {
    const TrainConfig& cfg = state.config;
    RunResult result;
    std::ofstream log;
    if (!opts.out_dir.empty()) {
        fs::create_directories(opts.out_dir / "checkpoints");
        const fs::path log_path = opts.out_dir / kTrainLogName;
        const bool fresh = state.iteration == 0 || !fs::exists(log_path);
        log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
        if (!log) throw IoError("cannot open " + log_path.string());
        if (fresh) log << loss_csv_header() << '\n';
    }
    StepDiagnostics diag;
    while (state.iteration < cfg.t_max) {
        const StepBatch batch = sample_batch(data, cfg, state.iteration);
        const LossReport r = train_step(state, batch, &diag);
        result.log.push_back(r);
        if (!diag.branch_isolation_ok) ++result.branch_isolation_failures;
        if (diag.adversarial_skipped) ++result.skipped_adversarial_steps;
        if (log.is_open()) log << loss_csv_row(r) << '\n';
        if (opts.on_step) opts.on_step(state, r, diag);
        if (!opts.out_dir.empty() && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0) {
            log.flush();
            save_checkpoint(checkpoint_path(opts.out_dir, state.iteration), state);
        }
    }
    if (!opts.out_dir.empty()) {
        log.flush();
        save_checkpoint(opts.out_dir / "checkpoints" / kFinalCheckpointName, state);
    }
    return result;
}

}  // namespace voxadv
