#include "pipeline/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "core/errors.hpp"
#include "infer/synthesis.hpp"
#include "metrics/image_metrics.hpp"
#include "nn/graph.hpp"
#include "phantom/phantom.hpp"
#include "pipeline/manifest.hpp"
#include "preprocess/dataset.hpp"

namespace mcs {

const char* kToolVersion = "mcsynth 0.1.0";

namespace {

namespace fs = std::filesystem;

void log_line(const GlobalOptions& g, const std::string& stage, const std::string& msg) {
    if (g.verbose) std::fprintf(stderr, "[%s] %s\n", stage.c_str(), msg.c_str());
}

void apply_threads(const GlobalOptions& g) { set_blas_threads(g.threads); }

// rethrows with the failing stage's name on the message, keeping the type
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw ValidationError(stage + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError(stage + ": " + e.what());
    } catch (const PipelineError& e) {
        throw PipelineError(stage + ": " + e.what());
    }
}

std::string options_hash(const nlohmann::json& j) { return hash_hex(fnv1a(j.dump())); }

RunManifest base_manifest(const std::string& command, const std::string& cfg_hash,
                          uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.config_hash = cfg_hash;
    m.seed = seed;
    m.tool_version = kToolVersion;
    m.timestamp_utc = utc_timestamp();
    return m;
}

PipelineConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return PipelineConfig{};
    return load_pipeline_config(path);
}

// Volumes named <case>.json under region subdirectories, or flat with an
// explicit region.
struct EvalItem {
    std::string case_id;
    std::string region;
    std::string rel;  // relative base path (no extension)
};

std::vector<EvalItem> resolve_eval_items(const std::string& pred_dir,
                                         const std::string& region_flag) {
    std::vector<EvalItem> items;
    const fs::path root(pred_dir);
    if (!fs::is_directory(root)) throw ValidationError("evaluate: not a directory: " + pred_dir);
    bool region_layout = false;
    for (const char* rn : {"brain", "pelvis"}) {
        const fs::path sub = root / rn;
        if (!fs::is_directory(sub)) continue;
        region_layout = true;
        for (const auto& e : fs::directory_iterator(sub)) {
            if (e.path().extension() != ".json") continue;
            const std::string stem = e.path().stem().string();
            items.push_back({stem, rn, std::string(rn) + "/" + stem});
        }
    }
    if (!region_layout) {
        if (region_flag.empty())
            throw ValidationError(
                "evaluate: flat volume layout needs --region (no brain/ or pelvis/ subdirs "
                "found in " +
                pred_dir + ")");
        parse_region(region_flag);
        for (const auto& e : fs::directory_iterator(root)) {
            if (e.path().extension() != ".json") continue;
            const std::string stem = e.path().stem().string();
            items.push_back({stem, region_flag, stem});
        }
    }
    std::sort(items.begin(), items.end(), [](const EvalItem& a, const EvalItem& b) {
        if (a.region != b.region) return a.region < b.region;
        return a.case_id < b.case_id;
    });
    if (items.empty()) throw ValidationError("evaluate: no volumes found under " + pred_dir);
    return items;
}

double parse_sentinel(const nlohmann::json& j, const char* what) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw ValidationError(std::string("report: bad numeric sentinel '") + s + "' in " + what);
    }
    return j.get<double>();
}

void write_json_file(const nlohmann::json& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    f << j.dump(2) << "\n";
}

}  // namespace

void cmd_phantom(const PhantomCmd& cmd, const GlobalOptions& g) {
    apply_threads(g);
    if (cmd.out.empty()) throw ValidationError("phantom: --out is required");
    PhantomDatasetOptions opts;
    opts.n_cases = cmd.n;
    opts.region = parse_region(cmd.region);
    opts.base_seed = g.seed.value_or(cmd.seed);
    opts.shape = cmd.shape;
    log_line(g, "phantom", "generating " + std::to_string(opts.n_cases) + " " + cmd.region +
                               " cases into " + cmd.out);
    generate_dataset(opts, cmd.out);
    RunManifest m = base_manifest(
        "phantom",
        options_hash({{"n", cmd.n},
                      {"region", cmd.region},
                      {"shape", cmd.shape}}),
        opts.base_seed);
    m.outputs = {cmd.out};
    write_manifest(m, cmd.out);
}

void cmd_preprocess(const PreprocessCmd& cmd, const GlobalOptions& g) {
    apply_threads(g);
    if (cmd.data.empty() || cmd.out.empty())
        throw ValidationError("preprocess: --data and --out are required");
    std::vector<CaseRef> refs = list_cases(cmd.data);
    if (!cmd.region.empty()) {
        const Region r = parse_region(cmd.region);
        std::erase_if(refs, [&](const CaseRef& ref) { return ref.region != r; });
    }
    if (refs.empty()) throw ValidationError("preprocess: no cases found under " + cmd.data);
    for (const CaseRef& ref : refs) {
        log_line(g, "preprocess", region_name(ref.region) + "/" + ref.case_id);
        PatientCase pc = load_case(cmd.data, ref);
        PreprocessedCase out = preprocess_case(pc);
        write_preprocessed(cmd.out, out);
    }
    RunManifest m = base_manifest("preprocess",
                                  options_hash({{"region", cmd.region}}), g.seed.value_or(0));
    m.inputs = {cmd.data};
    m.outputs = {cmd.out};
    const fs::path parent = fs::path(cmd.data) / "phantom_manifest.json";
    if (fs::exists(parent)) m.parents.push_back(parent.string());
    write_manifest(m, cmd.out);
}

TrainOutputs cmd_train(const TrainCmd& cmd, const GlobalOptions& g) {
    apply_threads(g);
    if (cmd.data.empty() || cmd.out.empty() || cmd.region.empty())
        throw ValidationError("train: --data, --out and --region are required");
    const Region region = parse_region(cmd.region);
    PipelineConfig cfg = load_config_or_default(cmd.config_path);
    if (g.seed) cfg.train.seed = *g.seed;

    std::vector<CaseRef> refs = list_preprocessed(cmd.data);
    std::erase_if(refs, [&](const CaseRef& r) { return r.region != region; });
    if (refs.empty())
        throw ValidationError("train: no preprocessed " + cmd.region + " cases under " +
                              cmd.data);
    std::vector<PreprocessedCase> cases;
    cases.reserve(refs.size());
    for (const CaseRef& r : refs) cases.push_back(read_preprocessed(cmd.data, r));

    log_line(g, "train", "training on " + std::to_string(cases.size()) + " cases");
    TrainOutputs out;
    out.result = train(cfg.train, cfg.generator, cfg.discriminator, cfg.fusion,
                       cfg.loss_weights, cases, region, cmd.out);

    std::vector<PreprocessedCase> val_cases;
    for (const PreprocessedCase& c : cases)
        if (std::find(out.result.val_cases.begin(), out.result.val_cases.end(), c.case_id) !=
            out.result.val_cases.end())
            val_cases.push_back(c);
    std::vector<std::string> dirs;
    for (const auto& [epoch, dir] : out.result.checkpoints) dirs.push_back(dir);
    log_line(g, "train", "selecting among " + std::to_string(dirs.size()) + " checkpoints");
    out.selection = select_checkpoint(dirs, val_cases, region);
    write_selection_json(out.selection, (fs::path(cmd.out) / "selection.json").string());

    const fs::path selected = fs::path(cmd.out) / "selected";
    fs::remove_all(selected);
    fs::copy(out.selection.scores[out.selection.selected_index].dir, selected,
             fs::copy_options::recursive);
    out.selected_dir = selected.string();

    RunManifest m = base_manifest("train", hash_hex(config_hash(cfg)), cfg.train.seed);
    m.inputs = {cmd.data};
    m.outputs = {cmd.out};
    const fs::path parent = fs::path(cmd.data) / "preprocess_manifest.json";
    if (fs::exists(parent)) m.parents.push_back(parent.string());
    write_manifest(m, cmd.out);
    return out;
}

void cmd_infer(const InferCmd& cmd, const GlobalOptions& g) {
    apply_threads(g);
    if (cmd.checkpoint.empty() || cmd.case_dir.empty() || cmd.out.empty() ||
        cmd.region.empty())
        throw ValidationError("infer: --checkpoint, --region, --case and --out are required");
    const Region region = parse_region(cmd.region);
    const RecombineBase base = parse_recombine_base(cmd.base);

    CheckpointMeta meta;
    ModelBundle bundle = load_checkpoint(cmd.checkpoint, &meta);
    if (!meta.region.empty() && meta.region != cmd.region)
        throw ValidationError("infer: checkpoint was trained for region '" + meta.region +
                              "', not '" + cmd.region + "'");

    PatientCase pat = load_case_dir(cmd.case_dir, region);
    log_line(g, "infer", "case " + pat.case_id);
    PreprocessedCase pc = preprocess_case(pat);
    SctBundle sct = generate_sct(pc, bundle, region, meta.slice_size);
    Volume3D final_sct = recombine_channels(sct, region, base);
    final_sct = apply_final_mask(final_sct, pc.mask);

    const fs::path out(cmd.out);
    fs::create_directories(out);
    write_volume(final_sct, (out / "sct").string());
    if (cmd.emit_intermediates) {
        write_volume(sct.ch1, (out / "sct_ch1").string());
        write_volume(sct.ch2, (out / "sct_ch2").string());
        write_volume(sct.ch3, (out / "sct_ch3").string());
        write_volume(sct.fused, (out / "sct_fused").string());
    }

    RunManifest m = base_manifest("infer",
                                  options_hash({{"region", cmd.region},
                                                {"base", cmd.base},
                                                {"emit_intermediates", cmd.emit_intermediates}}),
                                  g.seed.value_or(0));
    m.inputs = {cmd.checkpoint, cmd.case_dir};
    m.outputs = {cmd.out};
    const fs::path parent = fs::path(cmd.checkpoint).parent_path().parent_path() /
                            "train_manifest.json";
    if (fs::exists(parent)) m.parents.push_back(parent.string());
    write_manifest(m, cmd.out);
}

MetricsReport cmd_evaluate(const EvaluateCmd& cmd, const GlobalOptions& g) {
    apply_threads(g);
    if (cmd.gt.empty() || cmd.pred.empty() || cmd.mask.empty() || cmd.out_json.empty())
        throw ValidationError("evaluate: --gt, --pred, --mask and --out are required");
    std::vector<EvalItem> items = resolve_eval_items(cmd.pred, cmd.region);
    std::vector<CaseMetrics> rows;
    for (const EvalItem& it : items) {
        log_line(g, "evaluate", it.region + "/" + it.case_id);
        const Volume3D pred = read_volume((fs::path(cmd.pred) / it.rel).string());
        const Volume3D gt = read_volume((fs::path(cmd.gt) / it.rel).string());
        const Volume3D mask = read_volume((fs::path(cmd.mask) / it.rel).string());
        rows.push_back(compute_case_metrics(it.case_id, it.region, gt, pred, mask));
    }
    MetricsReport report = build_report(rows);
    nlohmann::json j = report_to_json(report);

    if (!cmd.gamma_volumes.empty()) {
        if (cmd.gamma_volumes.size() != 2)
            throw ValidationError("evaluate: --gamma takes exactly two dose volumes");
        const Volume3D ref = read_volume(cmd.gamma_volumes[0]);
        const Volume3D ev = read_volume(cmd.gamma_volumes[1]);
        GammaResult gr = gamma_pass_rate(ref, ev, cmd.gamma_params);
        const fs::path map_base = fs::path(cmd.out_json).parent_path() / "gamma_map";
        write_volume(gr.gamma_map, map_base.string());
        j["gamma"] = {{"pass_rate_pct", std::isnan(gr.pass_rate_pct)
                                            ? nlohmann::json(nullptr)
                                            : nlohmann::json(gr.pass_rate_pct)},
                      {"n_evaluated", gr.n_evaluated},
                      {"n_passed", gr.n_passed},
                      {"dose_diff_pct", cmd.gamma_params.dose_diff_pct},
                      {"dta_mm", cmd.gamma_params.dta_mm},
                      {"low_dose_cutoff_pct", cmd.gamma_params.low_dose_cutoff_pct},
                      {"search_radius_mm", cmd.gamma_params.search_radius_mm},
                      {"map", map_base.string() + ".json"}};
    }
    write_json_file(j, cmd.out_json);
    if (!cmd.out_csv.empty()) write_report_csv(report, cmd.out_csv);

    RunManifest m = base_manifest("evaluate", options_hash({{"region", cmd.region}}),
                                  g.seed.value_or(0));
    m.inputs = {cmd.gt, cmd.pred, cmd.mask};
    m.outputs = {cmd.out_json};
    if (!cmd.out_csv.empty()) m.outputs.push_back(cmd.out_csv);
    write_manifest(m, fs::path(cmd.out_json).parent_path());
    return report;
}

MetricsReport cmd_report(const ReportCmd& cmd, const GlobalOptions& g) {
    apply_threads(g);
    if (cmd.inputs.empty() || cmd.out_json.empty())
        throw ValidationError("report: --in and --out are required");
    std::vector<CaseMetrics> rows;
    for (const std::string& in : cmd.inputs) {
        std::ifstream f(in);
        if (!f) throw IoError("report: cannot open " + in);
        nlohmann::json j;
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("report: invalid JSON in " + in + ": " + e.what());
        }
        if (!j.contains("per_case"))
            throw ValidationError("report: " + in + " has no per_case rows");
        for (const auto& r : j["per_case"]) {
            CaseMetrics m;
            m.case_id = r.at("case_id").get<std::string>();
            m.region = r.at("region").get<std::string>();
            m.mae = parse_sentinel(r.at("mae_hu"), "mae_hu");
            m.psnr = parse_sentinel(r.at("psnr_db"), "psnr_db");
            m.ssim = parse_sentinel(r.at("ssim"), "ssim");
            m.voxel_count = r.value("voxel_count", int64_t{0});
            rows.push_back(std::move(m));
        }
    }
    MetricsReport report = build_report(rows);
    write_report_json(report, cmd.out_json);
    if (!cmd.out_csv.empty()) write_report_csv(report, cmd.out_csv);

    RunManifest m = base_manifest("report", options_hash({{"inputs", cmd.inputs}}),
                                  g.seed.value_or(0));
    m.inputs = cmd.inputs;
    m.outputs = {cmd.out_json};
    write_manifest(m, fs::path(cmd.out_json).parent_path());
    return report;
}

MetricsReport cmd_end_to_end(const EndToEndCmd& cmd, const GlobalOptions& g) {
    apply_threads(g);
    if (cmd.config_path.empty() || cmd.workdir.empty())
        throw ValidationError("end-to-end: --config and --workdir are required");
    PipelineConfig cfg = load_pipeline_config(cmd.config_path);
    if (g.seed) cfg.train.seed = *g.seed;

    std::vector<Region> regions;
    if (cfg.region == "both") {
        regions = {Region::brain, Region::pelvis};
    } else {
        regions = {parse_region(cfg.region)};
    }

    const fs::path work(cmd.workdir);
    fs::create_directories(work);

    std::string data_root = cfg.data_root;
    if (data_root.empty()) {
        if (!cfg.phantom)
            throw ValidationError("end-to-end: config needs data_root or a phantom stage");
        data_root = (work / "data").string();
        run_stage("phantom", [&] {
            for (Region r : regions) {
                PhantomDatasetOptions opts;
                opts.n_cases = cfg.phantom->n_cases;
                opts.region = r;
                opts.base_seed = cfg.phantom->base_seed;
                opts.shape = cfg.phantom->shape;
                log_line(g, "phantom", "generating " + std::to_string(opts.n_cases) + " " +
                                           region_name(r) + " cases");
                generate_dataset(opts, data_root);
            }
            return 0;
        });
    }

    const fs::path cache = work / "cache";
    run_stage("preprocess", [&] {
        for (Region r : regions) {
            PreprocessCmd pre{data_root, cache.string(), region_name(r)};
            cmd_preprocess(pre, g);
        }
        return 0;
    });

    std::vector<CaseMetrics> rows, baseline_rows;
    for (Region region : regions) {
        const std::string rn = region_name(region);
        const fs::path train_out = work / ("train_" + rn);

        // train + checkpoint selection need the region's pipeline config
        const fs::path region_cfg_path = work / ("config_" + rn + ".json");
        PipelineConfig rc = cfg;
        rc.region = rn;
        save_pipeline_config(rc, region_cfg_path);

        TrainOutputs tr = run_stage("train", [&] {
            TrainCmd tc{cache.string(), train_out.string(), rn, region_cfg_path.string()};
            return cmd_train(tc, g);
        });

        run_stage("infer", [&] {
            CheckpointMeta meta;
            ModelBundle bundle = load_checkpoint(tr.selected_dir, &meta);
            const RecombineBase base = parse_recombine_base(cfg.recombine_base);
            for (const std::string& case_id : tr.result.val_cases) {
                log_line(g, "infer", rn + "/" + case_id);
                PreprocessedCase pc = read_preprocessed(cache.string(), {region, case_id});
                SctBundle sct = generate_sct(pc, bundle, region, meta.slice_size);
                Volume3D final_sct = recombine_channels(sct, region, base);
                final_sct = apply_final_mask(final_sct, pc.mask);

                const std::string rel = rn + "/" + case_id;
                write_volume(final_sct, (work / "sct" / rel).string());
                write_volume(pc.ct_masked, (work / "eval_gt" / rel).string());
                write_volume(pc.mask, (work / "eval_mask" / rel).string());
                write_volume(pc.cbct_corr, (work / "eval_baseline" / rel).string());

                rows.push_back(
                    compute_case_metrics(case_id, rn, pc.ct_masked, final_sct, pc.mask));
                baseline_rows.push_back(
                    compute_case_metrics(case_id, rn, pc.ct_masked, pc.cbct_corr, pc.mask));
            }
            return 0;
        });
    }

    MetricsReport report = run_stage("evaluate", [&] { return build_report(rows); });
    write_report_json(report, work / "report.json");
    write_report_csv(report, work / "report.csv");
    MetricsReport baseline = build_report(baseline_rows);
    write_report_json(baseline, work / "baseline_report.json");

    RunManifest m = base_manifest("end-to-end", hash_hex(config_hash(cfg)), cfg.train.seed);
    m.inputs = {cmd.config_path};
    m.outputs = {(work / "report.json").string(), (work / "baseline_report.json").string()};
    for (Region r : regions) {
        const fs::path tm = work / ("train_" + std::string(region_name(r))) /
                            "train_manifest.json";
        if (fs::exists(tm)) m.parents.push_back(tm.string());
    }
    write_manifest(m, work);
    return report;
}

}  // namespace mcs
