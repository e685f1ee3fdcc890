#pragma once

// Reference implementations used only by tests. Everything here is written
// straight from the operation definitions (structuring-element loops, all-pairs
// distance scans, per-pixel window formulas) and shares no code with src/, so
// agreement is evidence of correctness rather than of copying.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "core/volume.hpp"
#include "metrics/gamma.hpp"
#include "preprocess/mask_ops.hpp"

namespace oracle {

using mcs::Volume3D;

struct Off3 {
    int dz, dy, dx;
};

inline std::vector<Off3> ball_offsets(int r) {
    std::vector<Off3> out;
    for (int dz = -r; dz <= r; ++dz)
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
                if (dz * dz + dy * dy + dx * dx <= r * r) out.push_back({dz, dy, dx});
    return out;
}

inline bool fg(const Volume3D& m, int64_t z, int64_t y, int64_t x) {
    if (z < 0 || y < 0 || x < 0 || z >= m.nz() || y >= m.ny() || x >= m.nx()) return false;
    return m.at(z, y, x) > 0.5f;
}

inline Volume3D dilate(const Volume3D& m, int r) {
    Volume3D out = m;
    const auto offs = ball_offsets(r);
    for (int64_t z = 0; z < m.nz(); ++z)
        for (int64_t y = 0; y < m.ny(); ++y)
            for (int64_t x = 0; x < m.nx(); ++x) {
                bool hit = false;
                for (const Off3& o : offs)
                    if (fg(m, z + o.dz, y + o.dy, x + o.dx)) {
                        hit = true;
                        break;
                    }
                out.at(z, y, x) = hit ? 1.0f : 0.0f;
            }
    return out;
}

inline Volume3D erode(const Volume3D& m, int r) {
    Volume3D out = m;
    const auto offs = ball_offsets(r);
    for (int64_t z = 0; z < m.nz(); ++z)
        for (int64_t y = 0; y < m.ny(); ++y)
            for (int64_t x = 0; x < m.nx(); ++x) {
                bool all = true;
                for (const Off3& o : offs)
                    if (!fg(m, z + o.dz, y + o.dy, x + o.dx)) {
                        all = false;
                        break;
                    }
                out.at(z, y, x) = all ? 1.0f : 0.0f;
            }
    return out;
}

// Closing on a domain padded by r, so the erosion never treats the volume
// border as background.
inline Volume3D close(const Volume3D& m, int r) {
    Volume3D pad(m.nz() + 2 * r, m.ny() + 2 * r, m.nx() + 2 * r, 0.0f);
    pad.spacing = m.spacing;
    for (int64_t z = 0; z < m.nz(); ++z)
        for (int64_t y = 0; y < m.ny(); ++y)
            for (int64_t x = 0; x < m.nx(); ++x) pad.at(z + r, y + r, x + r) = m.at(z, y, x);
    Volume3D closed = erode(dilate(pad, r), r);
    Volume3D out = m;
    for (int64_t z = 0; z < m.nz(); ++z)
        for (int64_t y = 0; y < m.ny(); ++y)
            for (int64_t x = 0; x < m.nx(); ++x) out.at(z, y, x) = closed.at(z + r, y + r, x + r);
    return out;
}

inline Volume3D fill_holes_per_slice(const Volume3D& m) {
    Volume3D out = m;
    const int64_t ny = m.ny(), nx = m.nx();
    for (int64_t z = 0; z < m.nz(); ++z) {
        std::vector<char> outside(static_cast<size_t>(ny * nx), 0);
        // iterate border flood fill to a fixed point; slow but simple
        bool changed = true;
        auto bg = [&](int64_t y, int64_t x) { return m.at(z, y, x) <= 0.5f; };
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x)
                if ((y == 0 || y == ny - 1 || x == 0 || x == nx - 1) && bg(y, x))
                    outside[static_cast<size_t>(y * nx + x)] = 1;
        while (changed) {
            changed = false;
            for (int64_t y = 0; y < ny; ++y)
                for (int64_t x = 0; x < nx; ++x) {
                    if (!bg(y, x) || outside[static_cast<size_t>(y * nx + x)]) continue;
                    const bool touch =
                        (y > 0 && outside[static_cast<size_t>((y - 1) * nx + x)]) ||
                        (y + 1 < ny && outside[static_cast<size_t>((y + 1) * nx + x)]) ||
                        (x > 0 && outside[static_cast<size_t>(y * nx + x - 1)]) ||
                        (x + 1 < nx && outside[static_cast<size_t>(y * nx + x + 1)]);
                    if (touch) {
                        outside[static_cast<size_t>(y * nx + x)] = 1;
                        changed = true;
                    }
                }
        }
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x)
                if (bg(y, x) && !outside[static_cast<size_t>(y * nx + x)]) out.at(z, y, x) = 1.0f;
    }
    return out;
}

inline Volume3D largest_component(const Volume3D& m) {
    // label by repeated sweeps of min-neighbor propagation (6-connectivity)
    const int64_t n = m.voxels();
    std::vector<int64_t> label(static_cast<size_t>(n), -1);
    for (int64_t i = 0; i < n; ++i)
        if (m.data[static_cast<size_t>(i)] > 0.5f) label[static_cast<size_t>(i)] = i;
    bool changed = true;
    const int64_t nz = m.nz(), ny = m.ny(), nx = m.nx();
    while (changed) {
        changed = false;
        for (int64_t z = 0; z < nz; ++z)
            for (int64_t y = 0; y < ny; ++y)
                for (int64_t x = 0; x < nx; ++x) {
                    const size_t i = m.index(z, y, x);
                    if (label[i] < 0) continue;
                    auto relax = [&](int64_t zz, int64_t yy, int64_t xx) {
                        if (zz < 0 || yy < 0 || xx < 0 || zz >= nz || yy >= ny || xx >= nx)
                            return;
                        const size_t j = m.index(zz, yy, xx);
                        if (label[j] >= 0 && label[j] < label[i]) {
                            label[i] = label[j];
                            changed = true;
                        }
                    };
                    relax(z - 1, y, x);
                    relax(z + 1, y, x);
                    relax(z, y - 1, x);
                    relax(z, y + 1, x);
                    relax(z, y, x - 1);
                    relax(z, y, x + 1);
                }
    }
    // component sizes keyed by root label; scan-order tie break matches the
    // "first encountered" contract because roots are minimal linear indices
    std::vector<int64_t> roots;
    std::vector<int64_t> sizes;
    for (int64_t i = 0; i < n; ++i) {
        if (label[static_cast<size_t>(i)] < 0) continue;
        const int64_t r = label[static_cast<size_t>(i)];
        auto it = std::find(roots.begin(), roots.end(), r);
        if (it == roots.end()) {
            roots.push_back(r);
            sizes.push_back(1);
        } else {
            ++sizes[static_cast<size_t>(it - roots.begin())];
        }
    }
    int64_t best = -1, best_size = 0;
    for (size_t k = 0; k < roots.size(); ++k)
        if (sizes[k] > best_size || (sizes[k] == best_size && roots[k] < best)) {
            best = roots[k];
            best_size = sizes[k];
        }
    Volume3D out = m;
    for (int64_t i = 0; i < n; ++i)
        out.data[static_cast<size_t>(i)] =
            (label[static_cast<size_t>(i)] == best && best >= 0) ? 1.0f : 0.0f;
    return out;
}

inline Volume3D regenerate_mask(const Volume3D& ct, const mcs::MaskParams& p = {}) {
    Volume3D thr = ct;
    for (float& v : thr.data) v = v > p.threshold_hu ? 1.0f : 0.0f;
    return oracle::largest_component(oracle::fill_holes_per_slice(
        oracle::close(oracle::dilate(thr, p.dilate_radius), p.close_radius)));
}

// All-pairs squared distance to the nearest seed, mm.
inline std::vector<double> edt_squared(const Volume3D& seeds) {
    const int64_t nz = seeds.nz(), ny = seeds.ny(), nx = seeds.nx();
    std::vector<std::array<int64_t, 3>> pts;
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x)
                if (seeds.at(z, y, x) > 0.5f) pts.push_back({z, y, x});
    std::vector<double> d(static_cast<size_t>(seeds.voxels()),
                          std::numeric_limits<double>::infinity());
    const double sz = seeds.spacing[0], sy = seeds.spacing[1], sx = seeds.spacing[2];
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& p : pts) {
                    const double dz = double(z - p[0]) * sz;
                    const double dy = double(y - p[1]) * sy;
                    const double dx = double(x - p[2]) * sx;
                    best = std::min(best, dz * dz + dy * dy + dx * dx);
                }
                d[seeds.index(z, y, x)] = best;
            }
    return d;
}

// Voxels overflow_correct must change: in the 40 mm hull (or outside the
// mask) and above the HU threshold. Early exit keeps the scan tolerable.
inline std::vector<char> overflow_changeset(const Volume3D& cbct, const Volume3D& mask,
                                            double hull_mm, double threshold_hu) {
    const int64_t nz = mask.nz(), ny = mask.ny(), nx = mask.nx();
    std::vector<std::array<int64_t, 3>> bg;
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x)
                if (mask.at(z, y, x) <= 0.5f) bg.push_back({z, y, x});
    const double sz = mask.spacing[0], sy = mask.spacing[1], sx = mask.spacing[2];
    const double hull2 = hull_mm * hull_mm;
    std::vector<char> changed(static_cast<size_t>(mask.voxels()), 0);
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x) {
                const size_t i = mask.index(z, y, x);
                if (cbct.data[i] <= threshold_hu) continue;
                bool in_hull = mask.data[i] <= 0.5f;
                if (!in_hull) {
                    for (const auto& p : bg) {
                        const double dz = double(z - p[0]) * sz;
                        const double dy = double(y - p[1]) * sy;
                        const double dx = double(x - p[2]) * sx;
                        if (dz * dz + dy * dy + dx * dx <= hull2) {
                            in_hull = true;
                            break;
                        }
                    }
                }
                changed[i] = in_hull ? 1 : 0;
            }
    return changed;
}

inline double mae_loop(const Volume3D& a, const Volume3D& b, const Volume3D& mask) {
    double s = 0;
    int64_t n = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        if (mask.data[i] > 0.5f) {
            s += std::abs(double(a.data[i]) - double(b.data[i]));
            ++n;
        }
    return s / double(n);
}

inline double psnr_loop(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask) {
    double mse = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    int64_t n = 0;
    for (size_t i = 0; i < gt.data.size(); ++i)
        if (mask.data[i] > 0.5f) {
            const double d = double(gt.data[i]) - double(pred.data[i]);
            mse += d * d;
            lo = std::min(lo, double(gt.data[i]));
            hi = std::max(hi, double(gt.data[i]));
            ++n;
        }
    mse /= double(n);
    const double range = hi - lo;
    if (range == 0.0) return std::numeric_limits<double>::quiet_NaN();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(range * range / mse);
}

// Slice-wise masked SSIM recomputed per pixel from the windowed formula:
// gaussian window, weights renormalized over in-bounds in-mask pixels,
// population (co)variance, mean over in-mask pixels of the per-pixel score.
inline double ssim_brute(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask,
                         int half = 5, double sigma = 1.5, double k1 = 0.01, double k2 = 0.03) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (size_t i = 0; i < gt.data.size(); ++i)
        if (mask.data[i] > 0.5f) {
            lo = std::min(lo, double(gt.data[i]));
            hi = std::max(hi, double(gt.data[i]));
        }
    const double range = hi - lo;
    if (range == 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double c1 = (k1 * range) * (k1 * range);
    const double c2 = (k2 * range) * (k2 * range);

    double total = 0;
    int64_t count = 0;
    for (int64_t z = 0; z < gt.nz(); ++z) {
        for (int64_t y = 0; y < gt.ny(); ++y) {
            for (int64_t x = 0; x < gt.nx(); ++x) {
                if (mask.at(z, y, x) <= 0.5f) continue;
                double wsum = 0, ma = 0, mb = 0;
                for (int64_t dy = -half; dy <= half; ++dy)
                    for (int64_t dx = -half; dx <= half; ++dx) {
                        const int64_t yy = y + dy, xx = x + dx;
                        if (yy < 0 || xx < 0 || yy >= gt.ny() || xx >= gt.nx()) continue;
                        if (mask.at(z, yy, xx) <= 0.5f) continue;
                        const double w =
                            std::exp(-double(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                        wsum += w;
                        ma += w * gt.at(z, yy, xx);
                        mb += w * pred.at(z, yy, xx);
                    }
                ma /= wsum;
                mb /= wsum;
                double va = 0, vb = 0, cov = 0;
                for (int64_t dy = -half; dy <= half; ++dy)
                    for (int64_t dx = -half; dx <= half; ++dx) {
                        const int64_t yy = y + dy, xx = x + dx;
                        if (yy < 0 || xx < 0 || yy >= gt.ny() || xx >= gt.nx()) continue;
                        if (mask.at(z, yy, xx) <= 0.5f) continue;
                        const double w =
                            std::exp(-double(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                        const double da = gt.at(z, yy, xx) - ma;
                        const double db = pred.at(z, yy, xx) - mb;
                        va += w * da * da;
                        vb += w * db * db;
                        cov += w * da * db;
                    }
                va /= wsum;
                vb /= wsum;
                cov /= wsum;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return total / double(count);
}

// Gamma map by unsorted exhaustive lattice scan with direct voxel reads.
// Valid when eval voxel centers coincide with the dta/3 lattice (spacing ==
// dta/3 per axis and equal origins), the configuration the tests construct.
inline Volume3D gamma_map_exhaustive(const Volume3D& ref, const Volume3D& eval,
                                     const mcs::GammaParams& p) {
    double ref_max = 0;
    for (float d : ref.data) ref_max = std::max(ref_max, double(d));
    const double cutoff = ref_max * p.low_dose_cutoff_pct / 100.0;
    const double dd_abs = ref_max * p.dose_diff_pct / 100.0;
    const double step = p.dta_mm / 3.0;
    const int m = static_cast<int>(std::floor(p.search_radius_mm / step + 1e-9));

    Volume3D map = ref;
    for (float& v : map.data) v = -1.0f;
    for (int64_t z = 0; z < ref.nz(); ++z)
        for (int64_t y = 0; y < ref.ny(); ++y)
            for (int64_t x = 0; x < ref.nx(); ++x) {
                const double rv = ref.at(z, y, x);
                if (rv < cutoff) continue;
                double best = std::numeric_limits<double>::infinity();
                for (int kz = -m; kz <= m; ++kz)
                    for (int ky = -m; ky <= m; ++ky)
                        for (int kx = -m; kx <= m; ++kx) {
                            const double d0 = kz * step, d1 = ky * step, d2 = kx * step;
                            const double r2 = d0 * d0 + d1 * d1 + d2 * d2;
                            if (r2 > p.search_radius_mm * p.search_radius_mm + 1e-9) continue;
                            const int64_t zz = z + kz, yy = y + ky, xx = x + kx;
                            if (zz < 0 || yy < 0 || xx < 0 || zz >= eval.nz() ||
                                yy >= eval.ny() || xx >= eval.nx())
                                continue;
                            const double dd = (double(eval.at(zz, yy, xx)) - rv) / dd_abs;
                            best = std::min(best,
                                            dd * dd + r2 / (p.dta_mm * p.dta_mm));
                        }
                map.at(z, y, x) = static_cast<float>(std::sqrt(best));
            }
    return map;
}

}  // namespace oracle
