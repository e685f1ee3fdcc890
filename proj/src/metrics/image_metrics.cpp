#include "metrics/image_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "core/errors.hpp"

namespace mcs {

namespace {

void check_inputs(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask,
                  const char* what) {
    if (gt.shape != pred.shape || gt.shape != mask.shape)
        throw ValidationError(std::string(what) + ": shape mismatch");
    for (float m : mask.data)
        if (m != 0.0f && m != 1.0f)
            throw ValidationError(std::string(what) + ": mask must be binary");
}

int64_t mask_count(const Volume3D& mask, const char* what) {
    int64_t n = 0;
    for (float m : mask.data) n += (m != 0.0f);
    if (n == 0) throw ValidationError(std::string(what) + ": empty mask");
    return n;
}

// in-mask (max - min) of the ground truth
double mask_range(const Volume3D& gt, const Volume3D& mask) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        if (mask.data[i] == 0.0f) continue;
        lo = std::min(lo, double(gt.data[i]));
        hi = std::max(hi, double(gt.data[i]));
    }
    return hi - lo;
}

}  // namespace

double masked_mae(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask) {
    check_inputs(gt, pred, mask, "mae");
    const int64_t n = mask_count(mask, "mae");
    double acc = 0.0;
    for (size_t i = 0; i < gt.data.size(); ++i)
        if (mask.data[i] != 0.0f) acc += std::abs(double(gt.data[i]) - double(pred.data[i]));
    return acc / double(n);
}

double masked_psnr(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask) {
    check_inputs(gt, pred, mask, "psnr");
    const int64_t n = mask_count(mask, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        if (mask.data[i] == 0.0f) continue;
        const double d = double(gt.data[i]) - double(pred.data[i]);
        mse += d * d;
    }
    mse /= double(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    const double range = mask_range(gt, mask);
    if (range == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 10.0 * std::log10(range * range / mse);
}

double masked_ssim(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask) {
    return masked_ssim(gt, pred, mask, SsimParams{});
}

double masked_ssim(const Volume3D& gt, const Volume3D& pred, const Volume3D& mask,
                   const SsimParams& params) {
    check_inputs(gt, pred, mask, "ssim");
    mask_count(mask, "ssim");
    const double range = mask_range(gt, mask);
    if (range == 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double c1 = (params.k1 * range) * (params.k1 * range);
    const double c2 = (params.k2 * range) * (params.k2 * range);

    const int hw = params.half_window;
    const int side = 2 * hw + 1;
    std::vector<double> kernel(static_cast<size_t>(side * side));
    for (int dy = -hw; dy <= hw; ++dy)
        for (int dx = -hw; dx <= hw; ++dx)
            kernel[static_cast<size_t>((dy + hw) * side + (dx + hw))] =
                std::exp(-(double(dy) * dy + double(dx) * dx) / (2.0 * params.sigma * params.sigma));

    const int64_t nz = gt.shape[0], ny = gt.shape[1], nx = gt.shape[2];
    double total = 0.0;
    int64_t count = 0;
    for (int64_t z = 0; z < nz; ++z) {
        for (int64_t y = 0; y < ny; ++y) {
            for (int64_t x = 0; x < nx; ++x) {
                if (mask.at(z, y, x) == 0.0f) continue;
                double wsum = 0.0, mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
                for (int dy = -hw; dy <= hw; ++dy) {
                    const int64_t yy = y + dy;
                    if (yy < 0 || yy >= ny) continue;
                    for (int dx = -hw; dx <= hw; ++dx) {
                        const int64_t xx = x + dx;
                        if (xx < 0 || xx >= nx) continue;
                        if (mask.at(z, yy, xx) == 0.0f) continue;
                        const double w =
                            kernel[static_cast<size_t>((dy + hw) * side + (dx + hw))];
                        const double a = gt.at(z, yy, xx);
                        const double b = pred.at(z, yy, xx);
                        wsum += w;
                        mx += w * a;
                        my += w * b;
                        mxx += w * a * a;
                        myy += w * b * b;
                        mxy += w * a * b;
                    }
                }
                mx /= wsum;
                my /= wsum;
                const double vx = mxx / wsum - mx * mx;
                const double vy = myy / wsum - my * my;
                const double cov = mxy / wsum - mx * my;
                const double s = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                                 ((mx * mx + my * my + c1) * (vx + vy + c2));
                total += s;
                ++count;
            }
        }
    }
    return total / double(count);
}

}  // namespace mcs
