#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "nn/networks.hpp"
#include "train/trainer.hpp"

namespace mcs {

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Optional phantom stage for self-contained end-to-end runs.
struct PhantomStageConfig {
    int n_cases = 8;
    uint64_t base_seed = 0;
    std::array<int64_t, 3> shape{0, 0, 0};  // z,y,x; 0 = region default
};

struct PipelineConfig {
    std::string region = "brain";  // "brain", "pelvis" or "both" (end-to-end only)
    TrainConfig train;
    GeneratorSpec generator;
    DiscriminatorSpec discriminator;
    FusionSpec fusion;
    LossWeights loss_weights;
    std::string recombine_base = "auto";
    std::string data_root;  // raw dataset; empty means the phantom stage provides it
    std::optional<PhantomStageConfig> phantom;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void save_pipeline_config(const PipelineConfig& c, const std::filesystem::path& path);

// FNV-1a over the canonical JSON dump; stable across runs for equal configs.
uint64_t config_hash(const PipelineConfig& c);

}  // namespace mcs
