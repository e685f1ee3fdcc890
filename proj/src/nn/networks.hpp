#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nn/layers.hpp"

namespace mcs {

struct GeneratorSpec {
    int in_channels = 3;
    int out_channels = 3;
    int base_filters = 64;
    int n_down = 3;  // stem plus n_down-1 downsampling stages
    int n_residual_blocks = 9;
    bool use_attention_gates = true;
    bool short_residual = false;           // fusion variant
    std::string downsample = "stride";     // "stride" or "pool"
};

struct FusionSpec {
    int in_channels = 3;
    int out_channels = 1;
    int base_filters = 64;
    int n_down = 3;
    int n_residual_blocks = 1;
    bool use_attention_gates = true;
    std::string downsample = "stride";
};

struct DiscriminatorSpec {
    int in_channels = 3;
    int n_layers = 4;
    int base_filters = 64;
};

void validate_spec(const GeneratorSpec& s);
void validate_spec(const DiscriminatorSpec& s);
GeneratorSpec fusion_to_generator_spec(const FusionSpec& f);

// Residual encoder/decoder generator: 7x7 stem, stride-2 (or pool) downs,
// residual bottleneck, nearest-upsample decode with attention-gated skip
// concatenation, 7x7 head, sigmoid output. With short_residual every conv
// layer gains a learned 1x1 projection added before normalization.
class ResidualGenerator {
public:
    ResidualGenerator(const GeneratorSpec& spec, Rng& rng, const std::string& name);

    // att_maps, when given, receives one attention-map node per skip level
    // (deepest first); empty when gates are disabled.
    int forward(Graph& g, int x, std::vector<int>* att_maps = nullptr);
    const std::vector<Param*>& params() const { return params_; }
    const GeneratorSpec& spec() const { return spec_; }
    // Input H/W must be divisible by this.
    int64_t spatial_multiple() const { return int64_t{1} << (spec_.n_down - 1); }

private:
    struct ConvUnit {
        Conv2d conv;
        Conv2d proj;  // short residual projection
        InstanceNorm norm;
        bool has_proj = false;
        bool has_norm = true;
    };
    ConvUnit make_unit(Rng& rng, const std::string& name, int64_t in_ch, int64_t out_ch,
                       int k, int stride, int pad, bool norm);
    int run_unit(Graph& g, ConvUnit& u, int x, bool activate = true);

    GeneratorSpec spec_;
    ConvUnit stem_;
    std::vector<ConvUnit> downs_;
    std::vector<ConvUnit> res_a_, res_b_;
    std::vector<ConvUnit> ups_;
    std::vector<AttentionGate> gates_;
    ConvUnit head_;
    std::vector<Param*> params_;
};

// PatchGAN discriminator: kernel-4 conv chain, widths doubling from
// base_filters, LeakyReLU(0.2), instance norm except the first layer,
// 1-channel logit map output.
class PatchDiscriminator {
public:
    PatchDiscriminator(const DiscriminatorSpec& spec, Rng& rng, const std::string& name);

    int forward(Graph& g, int x);
    const std::vector<Param*>& params() const { return params_; }
    const DiscriminatorSpec& spec() const { return spec_; }

private:
    DiscriminatorSpec spec_;
    std::vector<Conv2d> convs_;
    std::vector<InstanceNorm> norms_;  // entry i normalizes conv i+1
    Conv2d head_;
    std::vector<Param*> params_;
};

struct LossWeights {
    double alpha = 10.0;  // cycle
    double beta = 5.0;    // identity
};

// The five trainable networks of the pipeline.
struct ModelBundle {
    GeneratorSpec gen_spec;
    DiscriminatorSpec disc_spec;
    FusionSpec fusion_spec;
    LossWeights weights;
    uint64_t seed = 0;

    std::unique_ptr<ResidualGenerator> g_cbct2ct;
    std::unique_ptr<ResidualGenerator> g_ct2cbct;
    std::unique_ptr<PatchDiscriminator> d_ct;
    std::unique_ptr<PatchDiscriminator> d_cbct;
    std::unique_ptr<ResidualGenerator> fusion;

    std::vector<Param*> generator_params() const;  // both generators + fusion
    std::vector<Param*> discriminator_params() const;
    std::vector<Param*> all_params() const;
};

ModelBundle build_bundle(const GeneratorSpec& gs, const DiscriminatorSpec& ds,
                         const FusionSpec& fs, const LossWeights& w, uint64_t seed);

// Checkpoint directory: bundle.json plus one raw f32 blob per network.
struct CheckpointMeta {
    int epoch = 0;
    double validation_loss = 0.0;
    std::string region = "brain";
    int64_t slice_size = 0;  // training slice side; 0 = region default
};
void save_checkpoint(const ModelBundle& bundle, const std::string& dir,
                     const CheckpointMeta& meta);
ModelBundle load_checkpoint(const std::string& dir, CheckpointMeta* meta = nullptr);

}  // namespace mcs
