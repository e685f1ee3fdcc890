#pragma once

#include <json.hpp>

#include "nn/networks.hpp"

namespace mcs {

inline void to_json(nlohmann::json& j, const GeneratorSpec& s) {
    j = {{"in_channels", s.in_channels},
         {"out_channels", s.out_channels},
         {"base_filters", s.base_filters},
         {"n_down", s.n_down},
         {"n_residual_blocks", s.n_residual_blocks},
         {"use_attention_gates", s.use_attention_gates},
         {"short_residual", s.short_residual},
         {"downsample", s.downsample}};
}

inline void from_json(const nlohmann::json& j, GeneratorSpec& s) {
    GeneratorSpec d;
    s.in_channels = j.value("in_channels", d.in_channels);
    s.out_channels = j.value("out_channels", d.out_channels);
    s.base_filters = j.value("base_filters", d.base_filters);
    s.n_down = j.value("n_down", d.n_down);
    s.n_residual_blocks = j.value("n_residual_blocks", d.n_residual_blocks);
    s.use_attention_gates = j.value("use_attention_gates", d.use_attention_gates);
    s.short_residual = j.value("short_residual", d.short_residual);
    s.downsample = j.value("downsample", d.downsample);
}

inline void to_json(nlohmann::json& j, const FusionSpec& s) {
    j = {{"in_channels", s.in_channels},
         {"out_channels", s.out_channels},
         {"base_filters", s.base_filters},
         {"n_down", s.n_down},
         {"n_residual_blocks", s.n_residual_blocks},
         {"use_attention_gates", s.use_attention_gates},
         {"downsample", s.downsample}};
}

inline void from_json(const nlohmann::json& j, FusionSpec& s) {
    FusionSpec d;
    s.in_channels = j.value("in_channels", d.in_channels);
    s.out_channels = j.value("out_channels", d.out_channels);
    s.base_filters = j.value("base_filters", d.base_filters);
    s.n_down = j.value("n_down", d.n_down);
    s.n_residual_blocks = j.value("n_residual_blocks", d.n_residual_blocks);
    s.use_attention_gates = j.value("use_attention_gates", d.use_attention_gates);
    s.downsample = j.value("downsample", d.downsample);
}

inline void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
    j = {{"in_channels", s.in_channels},
         {"n_layers", s.n_layers},
         {"base_filters", s.base_filters}};
}

inline void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
    DiscriminatorSpec d;
    s.in_channels = j.value("in_channels", d.in_channels);
    s.n_layers = j.value("n_layers", d.n_layers);
    s.base_filters = j.value("base_filters", d.base_filters);
}

inline void to_json(nlohmann::json& j, const LossWeights& w) {
    j = {{"alpha", w.alpha}, {"beta", w.beta}};
}

inline void from_json(const nlohmann::json& j, LossWeights& w) {
    LossWeights d;
    w.alpha = j.value("alpha", d.alpha);
    w.beta = j.value("beta", d.beta);
}

}  // namespace mcs
