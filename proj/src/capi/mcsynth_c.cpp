#include "mcsynth/mcsynth.h"

#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "core/errors.hpp"
#include "core/volume.hpp"
#include "metrics/gamma.hpp"
#include "metrics/image_metrics.hpp"
#include "nn/graph.hpp"
#include "pipeline/commands.hpp"

struct mcs_volume {
    mcs::Volume3D v;
};

namespace {

thread_local std::string g_last_error;

std::optional<uint64_t> g_seed;
int g_threads = 1;
bool g_verbose = false;

mcs::GlobalOptions global_options() {
    mcs::GlobalOptions g;
    g.seed = g_seed;
    g.threads = g_threads;
    g.verbose = g_verbose;
    return g;
}

mcs_status fail(mcs_status s, const char* msg) {
    g_last_error = msg;
    return s;
}

template <typename Fn>
mcs_status wrap(Fn&& fn) {
    try {
        fn();
        return MCS_OK;
    } catch (const mcs::ValidationError& e) {
        g_last_error = e.what();
        return MCS_ERR_INVALID_ARGUMENT;
    } catch (const mcs::IoError& e) {
        g_last_error = e.what();
        return MCS_ERR_IO;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return MCS_ERR_RUNTIME;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MCS_ERR_RUNTIME;
    }
}

std::string opt_str(const char* s) { return s ? std::string(s) : std::string(); }

}  // namespace

extern "C" {

const char* mcs_version(void) { return mcs::kToolVersion; }

const char* mcs_last_error(void) { return g_last_error.c_str(); }

mcs_status mcs_set_threads(int n) {
    return wrap([&] {
        mcs::set_blas_threads(n);  // validates n
        g_threads = n;
    });
}

void mcs_set_verbose(int verbose) { g_verbose = verbose != 0; }

void mcs_set_seed(uint64_t seed) { g_seed = seed; }

void mcs_clear_seed(void) { g_seed.reset(); }

mcs_status mcs_volume_create(const int64_t shape[3], const double spacing_mm[3],
                             const double origin_mm[3], const float* data,
                             mcs_volume** out) {
    if (!shape || !out) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        auto vol = std::make_unique<mcs_volume>();
        vol->v.shape = {shape[0], shape[1], shape[2]};
        if (spacing_mm) vol->v.spacing = {spacing_mm[0], spacing_mm[1], spacing_mm[2]};
        if (origin_mm) vol->v.origin = {origin_mm[0], origin_mm[1], origin_mm[2]};
        const int64_t n = vol->v.voxels();
        if (n <= 0) throw mcs::ValidationError("volume: non-positive shape");
        vol->v.data.assign(static_cast<size_t>(n), 0.0f);
        if (data) std::memcpy(vol->v.data.data(), data, static_cast<size_t>(n) * sizeof(float));
        mcs::validate_volume(vol->v, "volume");
        *out = vol.release();
    });
}

mcs_status mcs_volume_read(const char* path, mcs_volume** out) {
    if (!path || !out) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        auto vol = std::make_unique<mcs_volume>();
        vol->v = mcs::read_volume(path);
        *out = vol.release();
    });
}

mcs_status mcs_volume_write(const mcs_volume* v, const char* path, const char* dtype) {
    if (!v || !path) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] { mcs::write_volume(v->v, path, dtype ? dtype : "f32"); });
}

void mcs_volume_free(mcs_volume* v) { delete v; }

mcs_status mcs_volume_shape(const mcs_volume* v, int64_t shape[3]) {
    if (!v || !shape) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    for (int i = 0; i < 3; ++i) shape[i] = v->v.shape[static_cast<size_t>(i)];
    return MCS_OK;
}

mcs_status mcs_volume_spacing(const mcs_volume* v, double spacing_mm[3]) {
    if (!v || !spacing_mm) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    for (int i = 0; i < 3; ++i) spacing_mm[i] = v->v.spacing[static_cast<size_t>(i)];
    return MCS_OK;
}

mcs_status mcs_volume_origin(const mcs_volume* v, double origin_mm[3]) {
    if (!v || !origin_mm) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    for (int i = 0; i < 3; ++i) origin_mm[i] = v->v.origin[static_cast<size_t>(i)];
    return MCS_OK;
}

const float* mcs_volume_data(const mcs_volume* v) { return v ? v->v.data.data() : nullptr; }

int64_t mcs_volume_voxel_count(const mcs_volume* v) { return v ? v->v.voxels() : -1; }

mcs_status mcs_cmd_phantom(int n_cases, const char* region, uint64_t seed,
                           const char* out_dir, const int64_t shape_or_null[3]) {
    if (!region || !out_dir) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        mcs::PhantomCmd cmd;
        cmd.n = n_cases;
        cmd.region = region;
        cmd.seed = seed;
        cmd.out = out_dir;
        if (shape_or_null)
            cmd.shape = {shape_or_null[0], shape_or_null[1], shape_or_null[2]};
        mcs::cmd_phantom(cmd, global_options());
    });
}

mcs_status mcs_cmd_preprocess(const char* data_dir, const char* out_dir, const char* region) {
    if (!data_dir || !out_dir) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        mcs::PreprocessCmd cmd{data_dir, out_dir, opt_str(region)};
        mcs::cmd_preprocess(cmd, global_options());
    });
}

mcs_status mcs_cmd_train(const char* cache_dir, const char* out_dir, const char* region,
                         const char* config_path) {
    if (!cache_dir || !out_dir || !region)
        return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        mcs::TrainCmd cmd{cache_dir, out_dir, region, opt_str(config_path)};
        mcs::cmd_train(cmd, global_options());
    });
}

mcs_status mcs_cmd_infer(const char* checkpoint_dir, const char* region, const char* case_dir,
                         const char* out_dir, int emit_intermediates, const char* base) {
    if (!checkpoint_dir || !region || !case_dir || !out_dir)
        return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        mcs::InferCmd cmd;
        cmd.checkpoint = checkpoint_dir;
        cmd.region = region;
        cmd.case_dir = case_dir;
        cmd.out = out_dir;
        cmd.emit_intermediates = emit_intermediates != 0;
        cmd.base = (base && *base) ? base : "auto";
        mcs::cmd_infer(cmd, global_options());
    });
}

mcs_status mcs_cmd_evaluate(const char* gt_dir, const char* pred_dir, const char* mask_dir,
                            const char* out_json, const char* out_csv, const char* region,
                            const char* gamma_ref_dose, const char* gamma_eval_dose) {
    if (!gt_dir || !pred_dir || !mask_dir || !out_json)
        return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        mcs::EvaluateCmd cmd;
        cmd.gt = gt_dir;
        cmd.pred = pred_dir;
        cmd.mask = mask_dir;
        cmd.out_json = out_json;
        cmd.out_csv = opt_str(out_csv);
        cmd.region = opt_str(region);
        const std::string gr = opt_str(gamma_ref_dose), ge = opt_str(gamma_eval_dose);
        if (!gr.empty() != !ge.empty())
            throw mcs::ValidationError("evaluate: gamma needs both dose volumes");
        if (!gr.empty()) cmd.gamma_volumes = {gr, ge};
        mcs::cmd_evaluate(cmd, global_options());
    });
}

mcs_status mcs_cmd_report(const char* const* input_jsons, size_t n_inputs,
                          const char* out_json, const char* out_csv) {
    if (!input_jsons || !out_json) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        mcs::ReportCmd cmd;
        for (size_t i = 0; i < n_inputs; ++i) {
            if (!input_jsons[i]) throw mcs::ValidationError("report: null input path");
            cmd.inputs.push_back(input_jsons[i]);
        }
        cmd.out_json = out_json;
        cmd.out_csv = opt_str(out_csv);
        mcs::cmd_report(cmd, global_options());
    });
}

mcs_status mcs_cmd_end_to_end(const char* config_path, const char* workdir) {
    if (!config_path || !workdir) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        mcs::EndToEndCmd cmd{config_path, workdir};
        mcs::cmd_end_to_end(cmd, global_options());
    });
}

mcs_status mcs_metric_mae(const mcs_volume* gt, const mcs_volume* pred,
                          const mcs_volume* mask, double* out) {
    if (!gt || !pred || !mask || !out) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] { *out = mcs::masked_mae(gt->v, pred->v, mask->v); });
}

mcs_status mcs_metric_psnr(const mcs_volume* gt, const mcs_volume* pred,
                           const mcs_volume* mask, double* out) {
    if (!gt || !pred || !mask || !out) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] { *out = mcs::masked_psnr(gt->v, pred->v, mask->v); });
}

mcs_status mcs_metric_ssim(const mcs_volume* gt, const mcs_volume* pred,
                           const mcs_volume* mask, double* out) {
    if (!gt || !pred || !mask || !out) return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] { *out = mcs::masked_ssim(gt->v, pred->v, mask->v); });
}

mcs_status mcs_metric_gamma(const mcs_volume* ref_dose, const mcs_volume* eval_dose,
                            double dose_diff_pct, double dta_mm, double low_dose_cutoff_pct,
                            double search_radius_mm, double* pass_rate_pct,
                            mcs_volume** gamma_map) {
    if (!ref_dose || !eval_dose || !pass_rate_pct)
        return fail(MCS_ERR_INVALID_ARGUMENT, "null argument");
    return wrap([&] {
        mcs::GammaParams params{dose_diff_pct, dta_mm, low_dose_cutoff_pct, search_radius_mm};
        mcs::GammaResult res = mcs::gamma_pass_rate(ref_dose->v, eval_dose->v, params);
        *pass_rate_pct = res.pass_rate_pct;
        if (gamma_map) {
            auto vol = std::make_unique<mcs_volume>();
            vol->v = std::move(res.gamma_map);
            *gamma_map = vol.release();
        }
    });
}

}  // extern "C"
