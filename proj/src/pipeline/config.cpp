#include "pipeline/config.hpp"

#include <fstream>

#include "core/errors.hpp"
#include "nn/spec_json.hpp"
#include "pipeline/manifest.hpp"

namespace mcs {

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"max_epochs", c.max_epochs},
         {"batch_size", c.batch_size},
         {"lr_generator", c.lr_generator},
         {"lr_discriminator", c.lr_discriminator},
         {"decay_start_epoch", c.decay_start_epoch},
         {"decay_every", c.decay_every},
         {"decay_factor", c.decay_factor},
         {"early_stop_patience", c.early_stop_patience},
         {"top_k", c.top_k},
         {"seed", c.seed},
         {"val_fraction", c.val_fraction},
         {"fusion_end_to_end", c.fusion_end_to_end},
         {"label_smoothing", c.label_smoothing},
         {"replay_buffer_size", c.replay_buffer_size},
         {"improvement_eps", c.improvement_eps},
         {"slice_size", c.slice_size}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.lr_generator = j.value("lr_generator", d.lr_generator);
    c.lr_discriminator = j.value("lr_discriminator", d.lr_discriminator);
    c.decay_start_epoch = j.value("decay_start_epoch", d.decay_start_epoch);
    c.decay_every = j.value("decay_every", d.decay_every);
    c.decay_factor = j.value("decay_factor", d.decay_factor);
    c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
    c.top_k = j.value("top_k", d.top_k);
    c.seed = j.value("seed", d.seed);
    c.val_fraction = j.value("val_fraction", d.val_fraction);
    c.fusion_end_to_end = j.value("fusion_end_to_end", d.fusion_end_to_end);
    c.label_smoothing = j.value("label_smoothing", d.label_smoothing);
    c.replay_buffer_size = j.value("replay_buffer_size", d.replay_buffer_size);
    c.improvement_eps = j.value("improvement_eps", d.improvement_eps);
    c.slice_size = j.value("slice_size", d.slice_size);
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
    j = {{"region", c.region},
         {"train", c.train},
         {"generator", c.generator},
         {"discriminator", c.discriminator},
         {"fusion", c.fusion},
         {"loss_weights", c.loss_weights},
         {"recombine_base", c.recombine_base},
         {"data_root", c.data_root}};
    if (c.phantom) {
        j["phantom"] = {{"n_cases", c.phantom->n_cases},
                        {"base_seed", c.phantom->base_seed},
                        {"shape", c.phantom->shape}};
    }
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
    PipelineConfig d;
    c.region = j.value("region", d.region);
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("generator")) c.generator = j.at("generator").get<GeneratorSpec>();
    if (j.contains("discriminator"))
        c.discriminator = j.at("discriminator").get<DiscriminatorSpec>();
    if (j.contains("fusion")) c.fusion = j.at("fusion").get<FusionSpec>();
    if (j.contains("loss_weights")) c.loss_weights = j.at("loss_weights").get<LossWeights>();
    c.recombine_base = j.value("recombine_base", d.recombine_base);
    c.data_root = j.value("data_root", d.data_root);
    if (j.contains("phantom")) {
        PhantomStageConfig p;
        p.n_cases = j.at("phantom").value("n_cases", p.n_cases);
        p.base_seed = j.at("phantom").value("base_seed", p.base_seed);
        p.shape = j.at("phantom").value("shape", p.shape);
        c.phantom = p;
    }
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config: invalid JSON in " + path.string() + ": " + e.what());
    }
    try {
        return j.get<PipelineConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config: bad value in " + path.string() + ": " + e.what());
    }
}

void save_pipeline_config(const PipelineConfig& c, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("config: cannot open " + path.string());
    f << nlohmann::json(c).dump(2) << "\n";
}

uint64_t config_hash(const PipelineConfig& c) {
    return fnv1a(nlohmann::json(c).dump());
}

}  // namespace mcs
