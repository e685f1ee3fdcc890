/* C interface to the mcsynth CBCT-to-sCT pipeline.
 *
 * All functions return mcs_status; on failure mcs_last_error() carries a
 * message (thread-local, valid until the next failing call on the same
 * thread). Handles are opaque and freed with their *_free function.
 */
#ifndef MCSYNTH_H
#define MCSYNTH_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mcs_status {
    MCS_OK = 0,
    MCS_ERR_INVALID_ARGUMENT = 1,
    MCS_ERR_RUNTIME = 2,
    MCS_ERR_IO = 3
} mcs_status;

const char* mcs_version(void);
const char* mcs_last_error(void);

/* Process-wide options consumed by the mcs_cmd_* calls. Threads pin the BLAS
 * pool (default 1; results are thread-count independent only at 1). The seed
 * override replaces config/command seeds until cleared. */
mcs_status mcs_set_threads(int n);
void mcs_set_verbose(int verbose);
void mcs_set_seed(uint64_t seed);
void mcs_clear_seed(void);

/* --- volumes ---------------------------------------------------------- */

typedef struct mcs_volume mcs_volume;

/* shape/spacing/origin are ordered (z, y, x). data is C-order, z slowest;
 * pass NULL to zero-fill. */
mcs_status mcs_volume_create(const int64_t shape[3], const double spacing_mm[3],
                             const double origin_mm[3], const float* data,
                             mcs_volume** out);
/* path names either the .json header or its basename without extension */
mcs_status mcs_volume_read(const char* path, mcs_volume** out);
/* dtype: "f32" or "i16" */
mcs_status mcs_volume_write(const mcs_volume* v, const char* path, const char* dtype);
void mcs_volume_free(mcs_volume* v);

mcs_status mcs_volume_shape(const mcs_volume* v, int64_t shape[3]);
mcs_status mcs_volume_spacing(const mcs_volume* v, double spacing_mm[3]);
mcs_status mcs_volume_origin(const mcs_volume* v, double origin_mm[3]);
const float* mcs_volume_data(const mcs_volume* v); /* NULL on bad handle */
int64_t mcs_volume_voxel_count(const mcs_volume* v); /* -1 on bad handle */

/* --- pipeline commands (mirror the CLI) ------------------------------- */

mcs_status mcs_cmd_phantom(int n_cases, const char* region, uint64_t seed,
                           const char* out_dir, const int64_t shape_or_null[3]);
/* region may be NULL/"" for all regions present */
mcs_status mcs_cmd_preprocess(const char* data_dir, const char* out_dir,
                              const char* region);
/* config_path may be NULL/"" for defaults */
mcs_status mcs_cmd_train(const char* cache_dir, const char* out_dir, const char* region,
                         const char* config_path);
/* base: "auto", "ch1" or "fused" (NULL means "auto") */
mcs_status mcs_cmd_infer(const char* checkpoint_dir, const char* region,
                         const char* case_dir, const char* out_dir,
                         int emit_intermediates, const char* base);
/* out_csv, region and the gamma dose volumes are optional (NULL/"") */
mcs_status mcs_cmd_evaluate(const char* gt_dir, const char* pred_dir, const char* mask_dir,
                            const char* out_json, const char* out_csv, const char* region,
                            const char* gamma_ref_dose, const char* gamma_eval_dose);
mcs_status mcs_cmd_report(const char* const* input_jsons, size_t n_inputs,
                          const char* out_json, const char* out_csv);
mcs_status mcs_cmd_end_to_end(const char* config_path, const char* workdir);

/* --- metrics ----------------------------------------------------------- */

mcs_status mcs_metric_mae(const mcs_volume* gt, const mcs_volume* pred,
                          const mcs_volume* mask, double* out);
/* +inf for identical inputs, NaN for constant in-mask ground truth */
mcs_status mcs_metric_psnr(const mcs_volume* gt, const mcs_volume* pred,
                           const mcs_volume* mask, double* out);
mcs_status mcs_metric_ssim(const mcs_volume* gt, const mcs_volume* pred,
                           const mcs_volume* mask, double* out);
/* pass_rate_pct is NaN when no voxel clears the low-dose cutoff; gamma_map
 * (optional) receives a new volume with gamma values, -1 below the cutoff */
mcs_status mcs_metric_gamma(const mcs_volume* ref_dose, const mcs_volume* eval_dose,
                            double dose_diff_pct, double dta_mm,
                            double low_dose_cutoff_pct, double search_radius_mm,
                            double* pass_rate_pct, mcs_volume** gamma_map);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MCSYNTH_H */
