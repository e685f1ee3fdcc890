#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nn/adam.hpp"
#include "nn/graph.hpp"
#include "nn/networks.hpp"
#include "preprocess/channels.hpp"
#include "train/losses.hpp"

namespace mcs {

struct TrainConfig {
    int max_epochs = 200;
    int batch_size = 1;  // fixed; validated
    double lr_generator = 1e-4;
    double lr_discriminator = 2e-4;
    int decay_start_epoch = 5;
    int decay_every = 2;
    double decay_factor = 0.8;
    int early_stop_patience = 20;
    int top_k = 5;
    uint64_t seed = 0;
    double val_fraction = 0.2;
    bool fusion_end_to_end = true;  // fusion loss gradient reaches the generator
    double label_smoothing = 0.0;   // discriminator real target = 1 - this
    int replay_buffer_size = 0;     // fake-image pool; 0 disables
    double improvement_eps = 1e-6;
    int64_t slice_size = 0;  // training slice side; 0 = region default (304/448)
};

void validate_config(const TrainConfig& cfg);

double lr_for(const TrainConfig& cfg, int epoch, bool generator);

// Case-level split; indices into the caller's case vector.
struct CaseSplit {
    std::vector<size_t> train;
    std::vector<size_t> val;
};
CaseSplit split_cases(size_t n_cases, double val_fraction, uint64_t seed);

struct SliceTensors {
    Tensor cbct;  // (1,3,H,W)
    Tensor ct;    // (1,3,H,W)
    Tensor ct1;   // (1,1,H,W) fusion target
};
SliceTensors make_slice_tensors(const SlicePair& pair);

struct StepLosses {
    LossBreakdown gen;
    double disc = 0.0;
};

// Owns the five networks, both optimizers and the tapes for one training
// run. Exposed separately from train() so single updates can be driven
// directly in tests.
class TrainLoop {
public:
    TrainLoop(const TrainConfig& cfg, ModelBundle bundle);

    // One alternating update: discriminators on (real, detached fake), then
    // generators + fusion against the refreshed discriminators.
    StepLosses step(const SliceTensors& s, double lr_gen, double lr_disc);

    // Forward-only total generator objective on one slice.
    LossBreakdown validate_slice(const SliceTensors& s);

    ModelBundle& bundle() { return bundle_; }
    const ModelBundle& bundle() const { return bundle_; }

private:
    Tensor pooled(std::vector<Tensor>& pool, Tensor fake);

    TrainConfig cfg_;
    ModelBundle bundle_;
    std::vector<Param*> gen_params_, disc_params_;
    Adam adam_gen_, adam_disc_;
    Graph ga_, gb_;
    Rng pool_rng_;
    std::vector<Tensor> pool_ct_, pool_cbct_;
};

struct EpochRecord {
    int epoch = 0;
    double lr_gen = 0.0, lr_disc = 0.0;
    LossBreakdown train_mean;
    double disc_mean = 0.0;
    double val_total = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    int epochs_run = 0;
    bool stopped_early = false;
    int best_epoch = -1;
    double best_val = 0.0;
    std::vector<std::string> train_cases, val_cases;
    // Retained checkpoints (top_k by validation loss plus the last epoch).
    std::vector<std::pair<int, std::string>> checkpoints;  // epoch -> dir
    std::string last_checkpoint_dir;
    std::string log_path;
    std::string summary_path;
    std::vector<EpochRecord> epochs;
};

// Full training run. Writes checkpoints/, train_log.jsonl and
// training_summary.json under out_dir. Every case must carry a CT.
TrainResult train(const TrainConfig& cfg, const GeneratorSpec& gs, const DiscriminatorSpec& ds,
                  const FusionSpec& fs, const LossWeights& lw,
                  const std::vector<PreprocessedCase>& cases, Region region,
                  const std::filesystem::path& out_dir);

}  // namespace mcs
