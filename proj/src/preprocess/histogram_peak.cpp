#include "preprocess/histogram_peak.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "preprocess/mask_ops.hpp"

namespace mcs {

void validate_peak_params(const HistogramPeakParams& p) {
    if (!(p.search_lo < p.search_hi) || !(p.bin_width > 0.0) || p.smooth_radius < 0 ||
        !(p.min_prominence > 0.0) || !(p.min_prominence < 1.0)) {
        throw ValidationError("histogram peak parameters out of range");
    }
}

namespace {

std::vector<double> box_smooth(const std::vector<double>& h, int radius) {
    if (radius == 0) return h;
    const int64_t n = static_cast<int64_t>(h.size());
    std::vector<double> out(h.size(), 0.0);
    const double inv = 1.0 / (2.0 * radius + 1.0);
    for (int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int64_t j = i - radius; j <= i + radius; ++j) {
            if (j >= 0 && j < n) acc += h[j];  // zero padding outside
        }
        out[i] = acc * inv;
    }
    return out;
}

struct Peak {
    int64_t index;
    double height;
    double prominence;
};

// Local maxima of s; a flat run bounded by strictly lower neighbors counts
// once at its left edge. Signal edges count as lower neighbors.
std::vector<int64_t> local_maxima(const std::vector<double>& s) {
    std::vector<int64_t> peaks;
    const int64_t n = static_cast<int64_t>(s.size());
    int64_t i = 0;
    while (i < n) {
        int64_t j = i;
        while (j + 1 < n && s[j + 1] == s[i]) ++j;
        bool rises_left = (i == 0) || (s[i - 1] < s[i]);
        bool falls_right = (j == n - 1) || (s[j + 1] < s[i]);
        if (rises_left && falls_right && s[i] > 0.0) peaks.push_back(i);
        i = j + 1;
    }
    return peaks;
}

// Prominence of a peak: height minus the higher of the two valley minima
// between the peak and the nearest strictly-higher point (or signal end) on
// each side.
double prominence_at(const std::vector<double>& s, int64_t p) {
    const int64_t n = static_cast<int64_t>(s.size());
    double left_min = s[p];
    for (int64_t i = p - 1; i >= 0; --i) {
        if (s[i] > s[p]) break;
        left_min = std::min(left_min, s[i]);
    }
    double right_min = s[p];
    for (int64_t i = p + 1; i < n; ++i) {
        if (s[i] > s[p]) break;
        right_min = std::min(right_min, s[i]);
    }
    return s[p] - std::max(left_min, right_min);
}

}  // namespace

PeakResult find_histogram_peak(const std::vector<double>& counts,
                               const HistogramPeakParams& params) {
    validate_peak_params(params);
    PeakResult res;
    if (counts.empty()) return res;

    std::vector<double> s = box_smooth(counts, params.smooth_radius);
    double max_count = *std::max_element(s.begin(), s.end());
    if (!(max_count > 0.0)) return res;

    std::vector<int64_t> candidates = local_maxima(s);
    const double min_prom = params.min_prominence * max_count;
    int64_t best = -1;
    double best_prom = -1.0;
    for (int64_t p : candidates) {
        double prom = prominence_at(s, p);
        if (prom < min_prom) continue;
        if (prom > best_prom) {  // strict: ties keep the earlier (lower-HU) peak
            best_prom = prom;
            best = p;
        }
    }
    if (best < 0) return res;
    res.level = params.search_lo + (static_cast<double>(best) + 0.5) * params.bin_width;
    res.found = true;
    return res;
}

PeakResult find_soft_tissue_level(const Volume3D& vol, const Volume3D& mask,
                                  const HistogramPeakParams& params) {
    validate_peak_params(params);
    if (!mask.same_grid(vol)) {
        throw ValidationError("find_soft_tissue_level: mask and volume grids differ");
    }
    if (count_foreground(mask) == 0) {
        throw ValidationError("find_soft_tissue_level: empty mask");
    }
    int64_t nbins = static_cast<int64_t>(
        std::ceil((params.search_hi - params.search_lo) / params.bin_width));
    std::vector<double> counts(static_cast<size_t>(nbins), 0.0);
    for (size_t i = 0; i < vol.data.size(); ++i) {
        if (mask.data[i] <= 0.5f) continue;
        double v = vol.data[i];
        if (v < params.search_lo || v >= params.search_hi) continue;
        auto b = static_cast<int64_t>((v - params.search_lo) / params.bin_width);
        b = std::clamp<int64_t>(b, 0, nbins - 1);
        counts[static_cast<size_t>(b)] += 1.0;
    }
    return find_histogram_peak(counts, params);
}

}  // namespace mcs
