#include "train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include <json.hpp>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "nn/bridge.hpp"
#include "train/schedule.hpp"

namespace mcs {

namespace {

namespace fs = std::filesystem;

// rng stream tags; keep stable, they define reproducibility
constexpr uint64_t kStreamSplit = 0x54001;
constexpr uint64_t kStreamEpochBase = 0x54100;
constexpr uint64_t kStreamPool = 0x54200;

nlohmann::json breakdown_json(const LossBreakdown& b) {
    return {
        {"gan_sct", b.gan_sct},         {"gan_scbct", b.gan_scbct},
        {"cycle_ct", b.cycle_ct},       {"cycle_cbct", b.cycle_cbct},
        {"identity_ct", b.identity_ct}, {"identity_cbct", b.identity_cbct},
        {"fusion_sct", b.fusion_sct},   {"total", b.total},
    };
}

}  // namespace

void validate_config(const TrainConfig& cfg) {
    if (cfg.max_epochs < 1) throw ValidationError("train config: max_epochs must be >= 1");
    if (cfg.batch_size != 1) throw ValidationError("train config: batch_size must be 1");
    if (cfg.lr_generator < 0 || cfg.lr_discriminator < 0)
        throw ValidationError("train config: learning rates must be >= 0");
    if (cfg.decay_start_epoch < 0) throw ValidationError("train config: decay_start_epoch must be >= 0");
    if (cfg.decay_every < 1) throw ValidationError("train config: decay_every must be >= 1");
    if (!(cfg.decay_factor > 0.0) || cfg.decay_factor > 1.0)
        throw ValidationError("train config: decay_factor must be in (0, 1]");
    if (cfg.early_stop_patience < 1) throw ValidationError("train config: early_stop_patience must be >= 1");
    if (cfg.top_k < 1) throw ValidationError("train config: top_k must be >= 1");
    if (!(cfg.val_fraction > 0.0) || !(cfg.val_fraction < 1.0))
        throw ValidationError("train config: val_fraction must be in (0, 1)");
    if (cfg.label_smoothing < 0.0 || cfg.label_smoothing >= 0.5)
        throw ValidationError("train config: label_smoothing must be in [0, 0.5)");
    if (cfg.replay_buffer_size < 0)
        throw ValidationError("train config: replay_buffer_size must be >= 0");
    if (!(cfg.improvement_eps >= 0.0))
        throw ValidationError("train config: improvement_eps must be >= 0");
    if (cfg.slice_size < 0)
        throw ValidationError("train config: slice_size must be >= 0");
}

double lr_for(const TrainConfig& cfg, int epoch, bool generator) {
    const double lr0 = generator ? cfg.lr_generator : cfg.lr_discriminator;
    return lr_at_epoch(lr0, epoch, cfg.decay_start_epoch, cfg.decay_every, cfg.decay_factor);
}

CaseSplit split_cases(size_t n_cases, double val_fraction, uint64_t seed) {
    if (n_cases < 2) throw ValidationError("training needs at least 2 cases (train + validation)");
    std::vector<size_t> order(n_cases);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(mix_seed(seed, kStreamSplit));
    for (size_t i = n_cases - 1; i > 0; --i) {
        size_t j = static_cast<size_t>(rng.below(static_cast<uint64_t>(i + 1)));
        std::swap(order[i], order[j]);
    }
    size_t n_val = static_cast<size_t>(std::llround(double(n_cases) * val_fraction));
    n_val = std::clamp<size_t>(n_val, 1, n_cases - 1);
    CaseSplit split;
    split.val.assign(order.begin(), order.begin() + static_cast<ptrdiff_t>(n_val));
    split.train.assign(order.begin() + static_cast<ptrdiff_t>(n_val), order.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    return split;
}

SliceTensors make_slice_tensors(const SlicePair& pair) {
    if (!pair.has_ct) throw ValidationError("make_slice_tensors: slice has no CT ground truth");
    SliceTensors t;
    t.cbct = slice_to_tensor(pair.cbct);
    t.ct = slice_to_tensor(pair.ct);
    t.ct1 = Tensor(1, 1, t.ct.h, t.ct.w);
    std::copy(t.ct.at(0, 0), t.ct.at(0, 0) + t.ct.h * t.ct.w, t.ct1.v.begin());
    return t;
}

TrainLoop::TrainLoop(const TrainConfig& cfg, ModelBundle bundle)
    : cfg_(cfg),
      bundle_(std::move(bundle)),
      gen_params_(bundle_.generator_params()),
      disc_params_(bundle_.discriminator_params()),
      adam_gen_(gen_params_),
      adam_disc_(disc_params_),
      pool_rng_(mix_seed(cfg.seed, kStreamPool)) {
    validate_config(cfg_);
}

Tensor TrainLoop::pooled(std::vector<Tensor>& pool, Tensor fake) {
    if (cfg_.replay_buffer_size <= 0) return fake;
    if (pool.size() < static_cast<size_t>(cfg_.replay_buffer_size)) {
        pool.push_back(fake);
        return fake;
    }
    if (pool_rng_.uniform() < 0.5) {
        size_t j = static_cast<size_t>(pool_rng_.below(pool.size()));
        Tensor old = std::move(pool[j]);
        pool[j] = std::move(fake);
        return old;
    }
    return fake;
}

StepLosses TrainLoop::step(const SliceTensors& s, double lr_gen, double lr_disc) {
    // Phase 1: all generator-side forwards on tape A. Nothing below alters
    // generator weights before these are consumed, so reusing them for the
    // generator update is numerically identical to a fresh pass.
    ga_.clear();
    const int in_cbct = ga_.input(s.cbct);
    const int in_ct = ga_.input(s.ct);
    const int sct = bundle_.g_cbct2ct->forward(ga_, in_cbct);
    const int scbct = bundle_.g_ct2cbct->forward(ga_, in_ct);
    const int cyc_cbct = bundle_.g_ct2cbct->forward(ga_, sct);
    const int cyc_ct = bundle_.g_cbct2ct->forward(ga_, scbct);
    const int id_ct = bundle_.g_cbct2ct->forward(ga_, in_ct);
    const int id_cbct = bundle_.g_ct2cbct->forward(ga_, in_cbct);
    const int fusion_in = cfg_.fusion_end_to_end ? sct : ga_.detach(sct);
    const int fused = bundle_.fusion->forward(ga_, fusion_in);
    const int in_ct1 = ga_.input(s.ct1);

    // Phase 2: discriminator update on reals and detached fakes.
    Tensor fake_ct = pooled(pool_ct_, ga_.out(sct));
    Tensor fake_cbct = pooled(pool_cbct_, ga_.out(scbct));
    gb_.clear();
    const int r_ct = gb_.input(s.ct);
    const int f_ct = gb_.input(std::move(fake_ct));
    const int r_cb = gb_.input(s.cbct);
    const int f_cb = gb_.input(std::move(fake_cbct));
    const float real_target = static_cast<float>(1.0 - cfg_.label_smoothing);
    const int d1r = bundle_.d_ct->forward(gb_, r_ct);
    const int d1f = bundle_.d_ct->forward(gb_, f_ct);
    const int d2r = bundle_.d_cbct->forward(gb_, r_cb);
    const int d2f = bundle_.d_cbct->forward(gb_, f_cb);
    const int l_d = gb_.weighted_sum({{gb_.bce_with_logits(d1r, real_target), 1.0f},
                                      {gb_.bce_with_logits(d1f, 0.0f), 1.0f},
                                      {gb_.bce_with_logits(d2r, real_target), 1.0f},
                                      {gb_.bce_with_logits(d2f, 0.0f), 1.0f}});
    StepLosses out;
    out.disc = gb_.scalar(l_d);
    zero_grads(disc_params_);
    gb_.backward(l_d);
    adam_disc_.step(lr_disc);

    // Phase 3: generator update against the refreshed discriminators.
    set_frozen(disc_params_, true);
    const int d_on_sct = bundle_.d_ct->forward(ga_, sct);
    const int d_on_scbct = bundle_.d_cbct->forward(ga_, scbct);
    const int n_gan_sct = ga_.mse_to_const(d_on_sct, 1.0f);
    const int n_gan_scbct = ga_.mse_to_const(d_on_scbct, 1.0f);
    const int n_cyc_ct = ga_.mse(cyc_ct, in_ct);
    const int n_cyc_cb = ga_.mse(cyc_cbct, in_cbct);
    const int n_id_ct = ga_.mse(id_ct, in_ct);
    const int n_id_cb = ga_.mse(id_cbct, in_cbct);
    const int n_fus = ga_.mse(fused, in_ct1);
    const float a = static_cast<float>(bundle_.weights.alpha);
    const float b = static_cast<float>(bundle_.weights.beta);
    const int total = ga_.weighted_sum({{n_gan_sct, 1.0f},
                                        {n_gan_scbct, 1.0f},
                                        {n_cyc_ct, a},
                                        {n_cyc_cb, a},
                                        {n_id_ct, b},
                                        {n_id_cb, b},
                                        {n_fus, 1.0f}});
    out.gen.gan_sct = ga_.scalar(n_gan_sct);
    out.gen.gan_scbct = ga_.scalar(n_gan_scbct);
    out.gen.cycle_ct = ga_.scalar(n_cyc_ct);
    out.gen.cycle_cbct = ga_.scalar(n_cyc_cb);
    out.gen.identity_ct = ga_.scalar(n_id_ct);
    out.gen.identity_cbct = ga_.scalar(n_id_cb);
    out.gen.fusion_sct = ga_.scalar(n_fus);
    out.gen.total = ga_.scalar(total);
    zero_grads(gen_params_);
    ga_.backward(total);
    adam_gen_.step(lr_gen);
    set_frozen(disc_params_, false);
    ga_.clear();
    return out;
}

LossBreakdown TrainLoop::validate_slice(const SliceTensors& s) {
    ga_.clear();
    const int in_cbct = ga_.input(s.cbct);
    const int in_ct = ga_.input(s.ct);
    const int sct = bundle_.g_cbct2ct->forward(ga_, in_cbct);
    const int scbct = bundle_.g_ct2cbct->forward(ga_, in_ct);
    const int cyc_cbct = bundle_.g_ct2cbct->forward(ga_, sct);
    const int cyc_ct = bundle_.g_cbct2ct->forward(ga_, scbct);
    const int id_ct = bundle_.g_cbct2ct->forward(ga_, in_ct);
    const int id_cbct = bundle_.g_ct2cbct->forward(ga_, in_cbct);
    const int fused = bundle_.fusion->forward(ga_, sct);
    const int d_on_sct = bundle_.d_ct->forward(ga_, sct);
    const int d_on_scbct = bundle_.d_cbct->forward(ga_, scbct);

    LossBreakdown b;
    b.gan_sct = mse_to_const_scalar(ga_.out(d_on_sct), 1.0);
    b.gan_scbct = mse_to_const_scalar(ga_.out(d_on_scbct), 1.0);
    b.cycle_ct = mse_scalar(ga_.out(cyc_ct), s.ct);
    b.cycle_cbct = mse_scalar(ga_.out(cyc_cbct), s.cbct);
    b.identity_ct = mse_scalar(ga_.out(id_ct), s.ct);
    b.identity_cbct = mse_scalar(ga_.out(id_cbct), s.cbct);
    b.fusion_sct = mse_scalar(ga_.out(fused), s.ct1);
    b.total = b.recompute_total(bundle_.weights);
    ga_.clear();
    return b;
}

TrainResult train(const TrainConfig& cfg, const GeneratorSpec& gs, const DiscriminatorSpec& ds,
                  const FusionSpec& fs, const LossWeights& lw,
                  const std::vector<PreprocessedCase>& cases, Region region,
                  const std::filesystem::path& out_dir) {
    validate_config(cfg);
    if (cases.empty()) throw ValidationError("train: empty dataset");
    for (const auto& c : cases) {
        if (!c.has_ct)
            throw ValidationError("train: case '" + c.case_id + "' has no CT ground truth");
        if (c.region != region)
            throw ValidationError("train: case '" + c.case_id + "' is not a " +
                                  region_name(region) + " case");
    }

    CaseSplit split = split_cases(cases.size(), cfg.val_fraction, cfg.seed);

    const int64_t slice_size =
        cfg.slice_size > 0 ? cfg.slice_size : region_target_size(region);
    const int64_t multiple = int64_t{1} << (gs.n_down - 1);
    if (slice_size % multiple != 0)
        throw ValidationError("train: slice_size " + std::to_string(slice_size) +
                              " is not a multiple of the generator stride " +
                              std::to_string(multiple));

    auto collect = [&](const std::vector<size_t>& idx) {
        std::vector<SliceTensors> out;
        for (size_t i : idx)
            for (const SlicePair& p : assemble_training_slices(cases[i], slice_size))
                out.push_back(make_slice_tensors(p));
        return out;
    };
    std::vector<SliceTensors> train_slices = collect(split.train);
    std::vector<SliceTensors> val_slices = collect(split.val);
    if (train_slices.empty() || val_slices.empty())
        throw ValidationError("train: a split side has no slices");

    TrainResult res;
    for (size_t i : split.train) res.train_cases.push_back(cases[i].case_id);
    for (size_t i : split.val) res.val_cases.push_back(cases[i].case_id);

    ModelBundle bundle = build_bundle(gs, ds, fs, lw, cfg.seed);
    TrainLoop loop(cfg, std::move(bundle));

    const fs::path ckpt_root = out_dir / "checkpoints";
    fs::create_directories(ckpt_root);
    const fs::path log_path = out_dir / "train_log.jsonl";
    std::ofstream log(log_path);
    if (!log) throw IoError("train: cannot open " + log_path.string());

    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int bad_epochs = 0;
    // epoch -> (val, dir); pruned to top_k + latest after every epoch
    std::vector<std::tuple<int, double, fs::path>> saved;

    std::vector<size_t> order(train_slices.size());
    std::iota(order.begin(), order.end(), size_t{0});

    int epoch = 0;
    for (; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr_g = lr_for(cfg, epoch, true);
        const double lr_d = lr_for(cfg, epoch, false);

        Rng shuf(mix_seed(cfg.seed, kStreamEpochBase + static_cast<uint64_t>(epoch)));
        for (size_t i = order.size() - 1; i > 0; --i) {
            size_t j = static_cast<size_t>(shuf.below(static_cast<uint64_t>(i + 1)));
            std::swap(order[i], order[j]);
        }

        LossBreakdown mean;
        double disc_mean = 0.0;
        for (size_t it = 0; it < order.size(); ++it) {
            StepLosses sl = loop.step(train_slices[order[it]], lr_g, lr_d);
            if (!std::isfinite(sl.gen.total) || !std::isfinite(sl.disc)) {
                CheckpointMeta meta{epoch, sl.gen.total, std::string(region_name(region)),
                                    slice_size};
                const fs::path snap = ckpt_root / "abort_snapshot";
                save_checkpoint(loop.bundle(), snap.string(), meta);
                throw PipelineError(
                    "train: non-finite loss at epoch " + std::to_string(epoch) + " iteration " +
                    std::to_string(it) + " (generator total " + std::to_string(sl.gen.total) +
                    ", discriminator " + std::to_string(sl.disc) + "); model snapshot saved to " +
                    snap.string());
            }
            mean.gan_sct += sl.gen.gan_sct;
            mean.gan_scbct += sl.gen.gan_scbct;
            mean.cycle_ct += sl.gen.cycle_ct;
            mean.cycle_cbct += sl.gen.cycle_cbct;
            mean.identity_ct += sl.gen.identity_ct;
            mean.identity_cbct += sl.gen.identity_cbct;
            mean.fusion_sct += sl.gen.fusion_sct;
            mean.total += sl.gen.total;
            disc_mean += sl.disc;
        }
        const double inv = 1.0 / double(order.size());
        mean.gan_sct *= inv;
        mean.gan_scbct *= inv;
        mean.cycle_ct *= inv;
        mean.cycle_cbct *= inv;
        mean.identity_ct *= inv;
        mean.identity_cbct *= inv;
        mean.fusion_sct *= inv;
        mean.total *= inv;
        disc_mean *= inv;

        double val_total = 0.0;
        for (const SliceTensors& s : val_slices) val_total += loop.validate_slice(s).total;
        val_total /= double(val_slices.size());
        if (!std::isfinite(val_total))
            throw PipelineError("train: non-finite validation loss at epoch " +
                                std::to_string(epoch));

        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d", epoch);
        const fs::path ckpt_dir = ckpt_root / name;
        CheckpointMeta meta{epoch, val_total, std::string(region_name(region)), slice_size};
        save_checkpoint(loop.bundle(), ckpt_dir.string(), meta);
        saved.emplace_back(epoch, val_total, ckpt_dir);

        // retain the top_k best plus the epoch just finished
        std::vector<size_t> by_val(saved.size());
        std::iota(by_val.begin(), by_val.end(), size_t{0});
        std::stable_sort(by_val.begin(), by_val.end(), [&](size_t a, size_t b) {
            return std::get<1>(saved[a]) < std::get<1>(saved[b]);
        });
        std::set<size_t> keep;
        for (size_t r = 0; r < by_val.size() && r < static_cast<size_t>(cfg.top_k); ++r)
            keep.insert(by_val[r]);
        keep.insert(saved.size() - 1);
        std::vector<std::tuple<int, double, fs::path>> kept;
        for (size_t i = 0; i < saved.size(); ++i) {
            if (keep.count(i)) {
                kept.push_back(saved[i]);
            } else {
                fs::remove_all(std::get<2>(saved[i]));
            }
        }
        saved = std::move(kept);

        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        EpochRecord rec{epoch, lr_g, lr_d, mean, disc_mean, val_total, seconds};
        res.epochs.push_back(rec);
        nlohmann::json j{{"epoch", epoch},
                         {"lr_gen", lr_g},
                         {"lr_disc", lr_d},
                         {"disc_loss", disc_mean},
                         {"train", breakdown_json(mean)},
                         {"val_total", val_total},
                         {"seconds", seconds}};
        log << j.dump() << "\n";
        log.flush();

        if (val_total <= best_val - cfg.improvement_eps) {
            best_val = val_total;
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
        }
        if (bad_epochs >= cfg.early_stop_patience) {
            ++epoch;
            res.stopped_early = true;
            break;
        }
    }

    res.epochs_run = epoch;
    res.best_epoch = best_epoch;
    res.best_val = best_val;
    for (const auto& [ep, val, dir] : saved) {
        res.checkpoints.emplace_back(ep, dir.string());
        (void)val;
    }
    res.last_checkpoint_dir = std::get<2>(saved.back()).string();
    res.log_path = log_path.string();

    nlohmann::json cj;
    for (const auto& [ep, val, dir] : saved)
        cj.push_back({{"epoch", ep}, {"val_total", val}, {"dir", fs::relative(dir, out_dir).string()}});
    nlohmann::json summary{
        {"format", "mcsynth-train-summary/1"},
        {"region", region_name(region)},
        {"epochs_run", res.epochs_run},
        {"stopped_early", res.stopped_early},
        {"best_epoch", res.best_epoch},
        {"best_val_total", res.best_val},
        {"train_cases", res.train_cases},
        {"val_cases", res.val_cases},
        {"checkpoints", cj},
        {"last_checkpoint", fs::relative(std::get<2>(saved.back()), out_dir).string()},
        {"seed", cfg.seed},
    };
    const fs::path summary_path = out_dir / "training_summary.json";
    std::ofstream sf(summary_path);
    if (!sf) throw IoError("train: cannot open " + summary_path.string());
    sf << summary.dump(2) << "\n";
    res.summary_path = summary_path.string();
    return res;
}

}  // namespace mcs
