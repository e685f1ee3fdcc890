#include "preprocess/corrections.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "preprocess/mask_ops.hpp"

namespace mcs {

bool range_offset_detected(const Volume3D& cbct) {
    if (cbct.data.empty()) return false;
    // Nearest-rank 1st percentile over all voxels.
    std::vector<float> sorted = cbct.data;
    size_t k = static_cast<size_t>(std::ceil(0.01 * static_cast<double>(sorted.size())));
    k = std::max<size_t>(k, 1);
    std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
    return sorted[k - 1] > -500.0f;
}

Volume3D correct_cbct_range(const Volume3D& cbct) {
    validate_volume(cbct, "correct_cbct_range input");
    Volume3D out = cbct;
    if (range_offset_detected(cbct)) {
        for (float& v : out.data) v -= 1024.0f;
    }
    for (float& v : out.data) v = std::clamp(v, kAirHu, kMaxHu);
    return out;
}

Volume3D overflow_correct(const Volume3D& cbct, const Volume3D& mask,
                          const OverflowParams& params) {
    validate_volume(cbct, "overflow_correct input");
    if (!mask.same_grid(cbct)) {
        throw ValidationError("overflow_correct: mask and volume grids differ");
    }
    if (count_foreground(mask) == 0) {
        throw ValidationError("overflow_correct: empty mask");
    }
    // Distance from inside voxels to the mask boundary = distance to the
    // nearest background voxel.
    Volume3D background = mask;
    for (size_t i = 0; i < background.data.size(); ++i) {
        background.data[i] = mask.data[i] > 0.5f ? 0.0f : 1.0f;
    }
    std::vector<double> d2 = edt_squared(background);
    const double hull2 = params.hull_mm * params.hull_mm;
    Volume3D out = cbct;
    for (size_t i = 0; i < out.data.size(); ++i) {
        bool in_hull = mask.data[i] <= 0.5f || d2[i] <= hull2;
        if (in_hull && out.data[i] > params.threshold_hu) out.data[i] = kAirHu;
    }
    return out;
}

Volume3D apply_mask_hu(const Volume3D& vol, const Volume3D& mask) {
    if (!mask.same_grid(vol)) {
        throw ValidationError("apply_mask_hu: mask and volume grids differ");
    }
    Volume3D out = vol;
    for (size_t i = 0; i < out.data.size(); ++i) {
        if (mask.data[i] <= 0.5f) out.data[i] = kAirHu;
    }
    return out;
}

}  // namespace mcs
