#include "metrics/gamma.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "core/errors.hpp"

namespace mcs {

void validate_gamma_params(const GammaParams& p) {
    if (!(p.dose_diff_pct > 0.0)) throw ValidationError("gamma: dose_diff_pct must be > 0");
    if (!(p.dta_mm > 0.0)) throw ValidationError("gamma: dta_mm must be > 0");
    if (!(p.low_dose_cutoff_pct > 0.0))
        throw ValidationError("gamma: low_dose_cutoff_pct must be > 0");
    if (!(p.search_radius_mm >= p.dta_mm))
        throw ValidationError("gamma: search_radius_mm must be >= dta_mm");
}

namespace {

// Trilinear sample at a physical position; voxel centers sit at
// origin + index * spacing. Coordinates within 1e-6 voxels of a grid plane
// are snapped so lattice points that coincide with voxel centers read the
// stored value exactly.
bool trilinear(const Volume3D& v, const std::array<double, 3>& pos, double* out) {
    double u[3];
    int64_t i0[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        u[a] = (pos[static_cast<size_t>(a)] - v.origin[static_cast<size_t>(a)]) /
               v.spacing[static_cast<size_t>(a)];
        const double r = std::nearbyint(u[a]);
        if (std::abs(u[a] - r) < 1e-6) u[a] = r;
        const double top = double(v.shape[static_cast<size_t>(a)] - 1);
        if (u[a] < 0.0 || u[a] > top) return false;
        i0[a] = static_cast<int64_t>(std::floor(u[a]));
        if (i0[a] > v.shape[static_cast<size_t>(a)] - 2)
            i0[a] = std::max<int64_t>(0, v.shape[static_cast<size_t>(a)] - 2);
        f[a] = u[a] - double(i0[a]);
    }
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        const int64_t z = std::min(i0[0] + dz, v.shape[0] - 1);
        const double wz = dz ? f[0] : 1.0 - f[0];
        if (wz == 0.0) continue;
        for (int dy = 0; dy < 2; ++dy) {
            const int64_t y = std::min(i0[1] + dy, v.shape[1] - 1);
            const double wy = dy ? f[1] : 1.0 - f[1];
            if (wy == 0.0) continue;
            for (int dx = 0; dx < 2; ++dx) {
                const int64_t x = std::min(i0[2] + dx, v.shape[2] - 1);
                const double wx = dx ? f[2] : 1.0 - f[2];
                if (wx == 0.0) continue;
                acc += wz * wy * wx * double(v.at(z, y, x));
            }
        }
    }
    *out = acc;
    return true;
}

struct Offset {
    std::array<double, 3> d;  // mm
    double dist2_term;        // (|d| / dta)^2
};

}  // namespace

GammaResult gamma_pass_rate(const Volume3D& ref_dose, const Volume3D& eval_dose,
                            const GammaParams& params) {
    validate_gamma_params(params);
    for (float d : ref_dose.data)
        if (d < 0.0f) throw ValidationError("gamma: negative reference dose");
    for (float d : eval_dose.data)
        if (d < 0.0f) throw ValidationError("gamma: negative eval dose");

    double ref_max = 0.0;
    for (float d : ref_dose.data) ref_max = std::max(ref_max, double(d));
    const double cutoff = ref_max * params.low_dose_cutoff_pct / 100.0;
    const double dd_abs = ref_max * params.dose_diff_pct / 100.0;

    GammaResult res;
    res.gamma_map.shape = ref_dose.shape;
    res.gamma_map.spacing = ref_dose.spacing;
    res.gamma_map.origin = ref_dose.origin;
    res.gamma_map.data.assign(ref_dose.data.size(), -1.0f);

    if (ref_max == 0.0) {
        res.pass_rate_pct = std::numeric_limits<double>::quiet_NaN();
        return res;
    }

    // dta/3 search lattice, sorted by distance so the scan can stop once the
    // distance term alone exceeds the best gamma so far
    const double step = params.dta_mm / 3.0;
    const int m = static_cast<int>(std::floor(params.search_radius_mm / step + 1e-9));
    std::vector<Offset> offsets;
    for (int dz = -m; dz <= m; ++dz)
        for (int dy = -m; dy <= m; ++dy)
            for (int dx = -m; dx <= m; ++dx) {
                const std::array<double, 3> d{dz * step, dy * step, dx * step};
                const double r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                if (r2 > params.search_radius_mm * params.search_radius_mm + 1e-9) continue;
                offsets.push_back({d, r2 / (params.dta_mm * params.dta_mm)});
            }
    std::sort(offsets.begin(), offsets.end(),
              [](const Offset& a, const Offset& b) { return a.dist2_term < b.dist2_term; });

    const int64_t nz = ref_dose.shape[0], ny = ref_dose.shape[1], nx = ref_dose.shape[2];
    for (int64_t z = 0; z < nz; ++z) {
        for (int64_t y = 0; y < ny; ++y) {
            for (int64_t x = 0; x < nx; ++x) {
                const double rv = ref_dose.at(z, y, x);
                if (rv < cutoff) continue;
                const std::array<double, 3> center{
                    ref_dose.origin[0] + double(z) * ref_dose.spacing[0],
                    ref_dose.origin[1] + double(y) * ref_dose.spacing[1],
                    ref_dose.origin[2] + double(x) * ref_dose.spacing[2]};
                double best = std::numeric_limits<double>::infinity();
                for (const Offset& o : offsets) {
                    if (o.dist2_term >= best) break;
                    const std::array<double, 3> pos{center[0] + o.d[0], center[1] + o.d[1],
                                                    center[2] + o.d[2]};
                    double ev;
                    if (!trilinear(eval_dose, pos, &ev)) continue;
                    const double dd = (ev - rv) / dd_abs;
                    best = std::min(best, dd * dd + o.dist2_term);
                }
                const double g = std::sqrt(best);
                res.gamma_map.at(z, y, x) = static_cast<float>(g);
                ++res.n_evaluated;
                // small margin so exact-boundary agreement counts as a pass
                if (g <= 1.0 + 1e-6) ++res.n_passed;
            }
        }
    }
    if (res.n_evaluated == 0) {
        res.pass_rate_pct = std::numeric_limits<double>::quiet_NaN();
    } else {
        res.pass_rate_pct = 100.0 * double(res.n_passed) / double(res.n_evaluated);
    }
    return res;
}

}  // namespace mcs
