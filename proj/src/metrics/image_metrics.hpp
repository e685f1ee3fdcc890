#pragma once

#include "core/volume.hpp"

namespace mcs {

// All three metrics are computed over in-mask voxels only; out-of-mask
// voxels cannot influence any value. psnr returns +inf for identical inputs
// and NaN when the in-mask ground truth is constant (range 0). ssim returns
// NaN in the constant case for the same reason.
double masked_mae(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask);
double masked_psnr(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask);
double masked_ssim(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask);

struct SsimParams {
    int half_window = 5;  // 11x11
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

// Slice-wise SSIM with Gaussian weights renormalized over the in-bounds,
// in-mask part of each window; the dynamic range is the in-mask gt range.
double masked_ssim(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask,
                   const SsimParams& params);

}  // namespace mcs
