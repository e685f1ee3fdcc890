#include "nn/networks.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "nn/spec_json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mcs {

void validate_spec(const GeneratorSpec& s) {
    if (s.in_channels < 1 || s.out_channels < 1 || s.base_filters < 1 ||
        s.n_residual_blocks < 0 || s.n_down < 2 || s.n_down > 5) {
        throw ValidationError("generator spec out of range");
    }
    if (s.downsample != "stride" && s.downsample != "pool") {
        throw ValidationError("generator downsample must be \"stride\" or \"pool\"");
    }
}

void validate_spec(const DiscriminatorSpec& s) {
    if (s.in_channels < 1 || s.base_filters < 1 || s.n_layers < 2 || s.n_layers > 6) {
        throw ValidationError("discriminator spec out of range");
    }
}

GeneratorSpec fusion_to_generator_spec(const FusionSpec& f) {
    GeneratorSpec g;
    g.in_channels = f.in_channels;
    g.out_channels = f.out_channels;
    g.base_filters = f.base_filters;
    g.n_down = f.n_down;
    g.n_residual_blocks = f.n_residual_blocks;
    g.use_attention_gates = f.use_attention_gates;
    g.short_residual = true;
    g.downsample = f.downsample;
    return g;
}

ResidualGenerator::ConvUnit ResidualGenerator::make_unit(Rng& rng, const std::string& name,
                                                         int64_t in_ch, int64_t out_ch, int k,
                                                         int stride, int pad, bool norm) {
    ConvUnit u;
    u.conv.init(rng, name, in_ch, out_ch, k, stride, pad);
    u.has_norm = norm;
    if (norm) u.norm.init(name + ".norm", out_ch);
    u.has_proj = spec_.short_residual;
    if (u.has_proj) u.proj.init(rng, name + ".proj", in_ch, out_ch, 1, stride, 0);
    return u;
}

int ResidualGenerator::run_unit(Graph& g, ConvUnit& u, int x, bool activate) {
    int y = u.conv.forward(g, x);
    if (u.has_proj) y = g.add(y, u.proj.forward(g, x));
    if (u.has_norm) y = u.norm.forward(g, y);
    if (activate) y = g.relu(y);
    return y;
}

ResidualGenerator::ResidualGenerator(const GeneratorSpec& spec, Rng& rng,
                                     const std::string& name)
    : spec_(spec) {
    validate_spec(spec);
    auto width = [&](int level) { return int64_t{spec.base_filters} << level; };
    const bool pool = spec.downsample == "pool";

    stem_ = make_unit(rng, name + ".stem", spec.in_channels, width(0), 7, 1, 3, true);
    for (int d = 1; d < spec.n_down; ++d) {
        downs_.push_back(make_unit(rng, name + ".down" + std::to_string(d), width(d - 1),
                                   width(d), 3, pool ? 1 : 2, 1, true));
    }
    const int64_t deep = width(spec.n_down - 1);
    for (int r = 0; r < spec.n_residual_blocks; ++r) {
        std::string rn = name + ".res" + std::to_string(r);
        res_a_.push_back(make_unit(rng, rn + "a", deep, deep, 3, 1, 1, true));
        res_b_.push_back(make_unit(rng, rn + "b", deep, deep, 3, 1, 1, true));
    }
    for (int u = spec.n_down - 2; u >= 0; --u) {
        int64_t in_ch = width(u + 1) + width(u);
        ups_.push_back(make_unit(rng, name + ".up" + std::to_string(u), in_ch, width(u), 3, 1,
                                 1, true));
        if (spec.use_attention_gates) {
            AttentionGate gate;
            gate.init(rng, name + ".att" + std::to_string(u), width(u), width(u + 1),
                      std::max<int64_t>(width(u) / 2, 1));
            gates_.push_back(std::move(gate));
        }
    }
    head_ = make_unit(rng, name + ".head", width(0), spec.out_channels, 7, 1, 3, false);

    stem_.conv.collect(params_);
    if (stem_.has_proj) stem_.proj.collect(params_);
    if (stem_.has_norm) stem_.norm.collect(params_);
    auto collect_unit = [&](ConvUnit& u) {
        u.conv.collect(params_);
        if (u.has_proj) u.proj.collect(params_);
        if (u.has_norm) u.norm.collect(params_);
    };
    for (auto& u : downs_) collect_unit(u);
    for (size_t i = 0; i < res_a_.size(); ++i) {
        collect_unit(res_a_[i]);
        collect_unit(res_b_[i]);
    }
    for (size_t i = 0; i < ups_.size(); ++i) {
        collect_unit(ups_[i]);
        if (spec.use_attention_gates) gates_[i].collect(params_);
    }
    collect_unit(head_);
}

int ResidualGenerator::forward(Graph& g, int x, std::vector<int>* att_maps) {
    const Tensor& in = g.out(x);
    if (in.c != spec_.in_channels) {
        throw ValidationError("generator expects " + std::to_string(spec_.in_channels) +
                              " channels, got " + in.shape_str());
    }
    const int64_t mult = spatial_multiple();
    if (in.h % mult != 0 || in.w % mult != 0 || in.h < mult || in.w < mult) {
        throw ValidationError("generator input " + in.shape_str() +
                              " not divisible by " + std::to_string(mult));
    }
    if (att_maps) att_maps->clear();
    const bool pool = spec_.downsample == "pool";

    std::vector<int> skips;
    int y = run_unit(g, stem_, x);
    skips.push_back(y);
    for (size_t d = 0; d < downs_.size(); ++d) {
        y = run_unit(g, downs_[d], y);
        if (pool) y = g.avg_pool2(y);
        if (d + 1 < downs_.size()) skips.push_back(y);
    }
    for (size_t r = 0; r < res_a_.size(); ++r) {
        int t = run_unit(g, res_a_[r], y);
        t = run_unit(g, res_b_[r], t, false);
        y = g.add(y, t);
    }
    for (size_t i = 0; i < ups_.size(); ++i) {
        int up = g.upsample_nearest2(y);
        int skip = skips[skips.size() - 1 - i];
        if (spec_.use_attention_gates) {
            auto [gated, amap] = gates_[i].forward(g, skip, up);
            if (att_maps) att_maps->push_back(amap);
            skip = gated;
        }
        y = run_unit(g, ups_[i], g.concat(up, skip));
    }
    y = run_unit(g, head_, y, false);
    return g.sigmoid(y);
}

PatchDiscriminator::PatchDiscriminator(const DiscriminatorSpec& spec, Rng& rng,
                                       const std::string& name)
    : spec_(spec) {
    validate_spec(spec);
    int64_t prev = spec.in_channels;
    for (int i = 0; i < spec.n_layers; ++i) {
        int64_t w = int64_t{spec.base_filters} << std::min(i, 3);
        int stride = i < spec.n_layers - 1 ? 2 : 1;
        Conv2d c;
        c.init(rng, name + ".conv" + std::to_string(i), prev, w, 4, stride, 1);
        convs_.push_back(std::move(c));
        if (i > 0) {
            InstanceNorm n;
            n.init(name + ".norm" + std::to_string(i), w);
            norms_.push_back(std::move(n));
        }
        prev = w;
    }
    head_.init(rng, name + ".head", prev, 1, 4, 1, 1);

    for (size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].collect(params_);
        if (i > 0) norms_[i - 1].collect(params_);
    }
    head_.collect(params_);
}

int PatchDiscriminator::forward(Graph& g, int x) {
    const Tensor& in = g.out(x);
    if (in.c != spec_.in_channels) {
        throw ValidationError("discriminator expects " + std::to_string(spec_.in_channels) +
                              " channels, got " + in.shape_str());
    }
    int y = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
        y = convs_[i].forward(g, y);
        if (i > 0) y = norms_[i - 1].forward(g, y);
        y = g.leaky_relu(y, 0.2f);
    }
    return head_.forward(g, y);
}

std::vector<Param*> ModelBundle::generator_params() const {
    std::vector<Param*> out = g_cbct2ct->params();
    const auto& b = g_ct2cbct->params();
    out.insert(out.end(), b.begin(), b.end());
    const auto& f = fusion->params();
    out.insert(out.end(), f.begin(), f.end());
    return out;
}

std::vector<Param*> ModelBundle::discriminator_params() const {
    std::vector<Param*> out = d_ct->params();
    const auto& b = d_cbct->params();
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::vector<Param*> ModelBundle::all_params() const {
    std::vector<Param*> out = generator_params();
    const auto& d = discriminator_params();
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

ModelBundle build_bundle(const GeneratorSpec& gs, const DiscriminatorSpec& ds,
                         const FusionSpec& fs, const LossWeights& w, uint64_t seed) {
    validate_spec(gs);
    validate_spec(ds);
    if (w.alpha < 0.0 || w.beta < 0.0) {
        throw ValidationError("loss weights must be non-negative");
    }
    ModelBundle b;
    b.gen_spec = gs;
    b.disc_spec = ds;
    b.fusion_spec = fs;
    b.weights = w;
    b.seed = seed;
    Rng r1(mix_seed(seed, 11)), r2(mix_seed(seed, 12)), r3(mix_seed(seed, 13)),
        r4(mix_seed(seed, 14)), r5(mix_seed(seed, 15));
    b.g_cbct2ct = std::make_unique<ResidualGenerator>(gs, r1, "g_cbct2ct");
    b.g_ct2cbct = std::make_unique<ResidualGenerator>(gs, r2, "g_ct2cbct");
    b.d_ct = std::make_unique<PatchDiscriminator>(ds, r3, "d_ct");
    b.d_cbct = std::make_unique<PatchDiscriminator>(ds, r4, "d_cbct");
    b.fusion = std::make_unique<ResidualGenerator>(fusion_to_generator_spec(fs), r5, "fusion");
    return b;
}

namespace {

void write_blob(const std::string& path, const std::vector<Param*>& params, json& table) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint blob " + path);
    table = json::array();
    for (const Param* p : params) {
        out.write(reinterpret_cast<const char*>(p->value.v.data()),
                  static_cast<std::streamsize>(p->value.v.size() * sizeof(float)));
        table.push_back({{"name", p->name}, {"numel", p->value.numel()}});
    }
    if (!out.flush()) throw IoError("failed writing checkpoint blob " + path);
}

void read_blob(const std::string& path, const std::vector<Param*>& params, const json& table) {
    if (table.size() != params.size()) {
        throw IoError("checkpoint blob " + path + ": parameter count mismatch");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint blob " + path);
    for (size_t i = 0; i < params.size(); ++i) {
        Param* p = params[i];
        const json& row = table[i];
        if (row.at("name").get<std::string>() != p->name ||
            row.at("numel").get<int64_t>() != p->value.numel()) {
            throw IoError("checkpoint blob " + path + ": parameter layout mismatch at " +
                          p->name);
        }
        in.read(reinterpret_cast<char*>(p->value.v.data()),
                static_cast<std::streamsize>(p->value.v.size() * sizeof(float)));
    }
    if (!in) throw IoError("checkpoint blob " + path + " truncated");
    // must be at EOF
    in.peek();
    if (!in.eof()) throw IoError("checkpoint blob " + path + " has trailing bytes");
}

const std::array<const char*, 5> kNetFiles = {"g_cbct2ct.bin", "g_ct2cbct.bin", "d_ct.bin",
                                              "d_cbct.bin", "fusion.bin"};

std::array<std::vector<Param*>, 5> net_params(const ModelBundle& b) {
    return {b.g_cbct2ct->params(), b.g_ct2cbct->params(), b.d_ct->params(),
            b.d_cbct->params(), b.fusion->params()};
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::string& dir,
                     const CheckpointMeta& meta) {
    fs::create_directories(dir);
    json j;
    j["format"] = "mcsynth-checkpoint/1";
    j["epoch"] = meta.epoch;
    j["validation_loss"] = meta.validation_loss;
    j["region"] = meta.region;
    j["slice_size"] = meta.slice_size;
    j["seed"] = bundle.seed;
    j["loss_weights"] = bundle.weights;
    j["generator_spec"] = bundle.gen_spec;
    j["discriminator_spec"] = bundle.disc_spec;
    j["fusion_spec"] = bundle.fusion_spec;

    auto nets = net_params(bundle);
    json files = json::object();
    for (size_t i = 0; i < nets.size(); ++i) {
        json table;
        write_blob((fs::path(dir) / kNetFiles[i]).string(), nets[i], table);
        files[kNetFiles[i]] = table;
    }
    j["networks"] = files;

    std::ofstream out((fs::path(dir) / "bundle.json").string());
    if (!out) throw IoError("cannot write " + dir + "/bundle.json");
    out << j.dump(2) << "\n";
    if (!out.flush()) throw IoError("failed writing " + dir + "/bundle.json");
}

ModelBundle load_checkpoint(const std::string& dir, CheckpointMeta* meta) {
    std::ifstream in((fs::path(dir) / "bundle.json").string());
    if (!in) throw IoError("cannot open checkpoint " + dir + "/bundle.json");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint " + dir + "/bundle.json: " + e.what());
    }
    if (j.value("format", "") != "mcsynth-checkpoint/1") {
        throw IoError(dir + "/bundle.json: unsupported checkpoint format");
    }
    ModelBundle b = build_bundle(j.at("generator_spec").get<GeneratorSpec>(),
                                 j.at("discriminator_spec").get<DiscriminatorSpec>(),
                                 j.at("fusion_spec").get<FusionSpec>(),
                                 j.at("loss_weights").get<LossWeights>(),
                                 j.at("seed").get<uint64_t>());
    auto nets = net_params(b);
    for (size_t i = 0; i < nets.size(); ++i) {
        read_blob((fs::path(dir) / kNetFiles[i]).string(), nets[i],
                  j.at("networks").at(kNetFiles[i]));
    }
    if (meta) {
        meta->epoch = j.value("epoch", 0);
        meta->validation_loss = j.value("validation_loss", 0.0);
        meta->region = j.value("region", "brain");
        meta->slice_size = j.value("slice_size", int64_t{0});
    }
    return b;
}

}  // namespace mcs
