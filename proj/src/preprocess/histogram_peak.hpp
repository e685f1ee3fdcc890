#pragma once

#include <vector>

#include "core/volume.hpp"

namespace mcs {

struct HistogramPeakParams {
    double search_lo = -300.0;
    double search_hi = 300.0;
    double bin_width = 4.0;
    int smooth_radius = 2;        // bins
    double min_prominence = 0.05; // fraction of the smoothed maximum
};

void validate_peak_params(const HistogramPeakParams& params);

struct PeakResult {
    double level = 0.0;
    bool found = false;  // false = fallback to the CT water level
};

// Peak search on a precomputed histogram (counts per bin over
// [search_lo, search_hi), bin i covering [lo + i*w, lo + (i+1)*w)).
// Box-smooths with zero padding, finds local maxima (plateaus count once, at
// their left edge), ranks by prominence and returns the center of the most
// prominent qualifying peak. Ties break toward the lowest HU.
PeakResult find_histogram_peak(const std::vector<double>& counts,
                               const HistogramPeakParams& params);

// Builds the in-mask histogram and runs find_histogram_peak.
PeakResult find_soft_tissue_level(const Volume3D& vol, const Volume3D& mask,
                                  const HistogramPeakParams& params = {});

}  // namespace mcs
