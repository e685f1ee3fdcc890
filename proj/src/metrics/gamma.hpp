#pragma once

#include "core/volume.hpp"

namespace mcs {

struct GammaParams {
    double dose_diff_pct = 2.0;      // % of reference max
    double dta_mm = 2.0;             // distance to agreement
    double low_dose_cutoff_pct = 10.0;
    double search_radius_mm = 4.0;   // default 2 * dta
};
void validate_gamma_params(const GammaParams& p);

struct GammaResult {
    double pass_rate_pct = 0.0;  // NaN when nothing is above the cutoff
    int64_t n_evaluated = 0;
    int64_t n_passed = 0;
    Volume3D gamma_map;  // on the reference grid; -1 below cutoff
};

// Global gamma index: for each reference voxel above the low-dose cutoff,
// minimize sqrt((dose diff / dd)^2 + (distance / dta)^2) over eval-dose
// samples on a dta/3 lattice within the search radius, trilinear in physical
// coordinates. Samples falling outside the eval grid are skipped.
GammaResult gamma_pass_rate(const Volume3D& ref_dose, const Volume3D& eval_dose,
                            const GammaParams& params);

}  // namespace mcs
