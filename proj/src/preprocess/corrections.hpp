#pragma once

#include "core/volume.hpp"

namespace mcs {

// Detects the +1024 storage offset some scanners use (1st percentile of all
// voxels above -500 HU) and shifts by -1024 when present; always clips to
// [-1024, 3000] afterwards.
Volume3D correct_cbct_range(const Volume3D& cbct);
bool range_offset_detected(const Volume3D& cbct);

// Resets implausible high intensities near the patient surface: every voxel
// within `hull_mm` of the mask boundary (or outside the mask) whose value
// exceeds `threshold_hu` is set to -1024 HU. Distances are spacing-aware.
struct OverflowParams {
    double hull_mm = 40.0;
    double threshold_hu = 1000.0;
};
Volume3D overflow_correct(const Volume3D& cbct, const Volume3D& mask,
                          const OverflowParams& params = {});

// Out-of-mask voxels forced to -1024 HU.
Volume3D apply_mask_hu(const Volume3D& vol, const Volume3D& mask);

}  // namespace mcs
