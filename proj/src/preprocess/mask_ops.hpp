#pragma once

#include <vector>

#include "core/volume.hpp"

namespace mcs {

// Binary morphology on {0,1} volumes with spherical structuring elements
// (offsets with dz^2+dy^2+dx^2 <= r^2, voxel units). Out-of-bounds voxels
// count as background for dilation and erosion; closing runs on a domain
// padded by the radius so it stays extensive at the volume faces.
Volume3D binary_threshold(const Volume3D& v, float thr);  // v > thr
Volume3D binary_dilate(const Volume3D& mask, int radius);
Volume3D binary_erode(const Volume3D& mask, int radius);
Volume3D binary_close(const Volume3D& mask, int radius);

// Fills per-slice 2D holes: background 4-connected regions not reachable
// from the slice border become foreground.
Volume3D fill_holes_per_slice(const Volume3D& mask);

// Keeps the largest 6-connected foreground component (first encountered in
// scan order on ties). Returns all-zero volume if mask is empty.
Volume3D largest_component(const Volume3D& mask);

// Exact squared Euclidean distance (spacing-aware, mm^2) from every voxel to
// the nearest seed voxel (seed = value > 0.5). Voxels with no seed anywhere
// get +inf. `spacing` in (z, y, x) order like Volume3D.
std::vector<double> edt_squared(const Volume3D& seeds);

// mask = largest_component(fill_holes(close(dilate(ct > thr, r_dilate), r_close))).
// Throws ValidationError when no voxel exceeds the threshold.
struct MaskParams {
    float threshold_hu = -500.0f;
    int dilate_radius = 2;
    int close_radius = 5;
};
Volume3D regenerate_mask(const Volume3D& ct, const MaskParams& params = {});

int64_t count_foreground(const Volume3D& mask);

}  // namespace mcs
