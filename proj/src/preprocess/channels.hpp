#pragma once

#include <array>
#include <string>

#include "core/volume.hpp"
#include "preprocess/histogram_peak.hpp"

namespace mcs {

enum class Region { brain, pelvis };

std::string region_name(Region r);
Region parse_region(const std::string& name);

// Slice height/width the networks train on.
int64_t region_target_size(Region r);
// Half-width of the soft-tissue window.
double region_soft_halfwidth(Region r);

struct ChannelWindows {
    HUWindow full{-1024.0, 3000.0};
    HUWindow soft{-150.0, 150.0};
    HUWindow dense{600.0, 3000.0};
    double soft_level = 0.0;
    double soft_halfwidth = 150.0;
    bool soft_level_is_fallback = false;
};

// Windows for a given soft-tissue level. CT uses level 0 (water peak).
ChannelWindows make_channel_windows(Region region, double soft_level, bool fallback = false);

enum class Modality { ct, cbct };

// Normalized per-channel volumes plus the windows that produced them.
struct MultiChannelVolume {
    std::array<Volume3D, 3> ch;
    ChannelWindows windows;
};

// Masks the volume to -1024 HU outside `mask`, then normalizes it through the
// full / soft / high-density windows. The soft window is centred on 0 HU for
// CT and on the in-mask histogram peak for CBCT.
MultiChannelVolume build_channels(const Volume3D& vol, const Volume3D& mask, Region region,
                                  Modality modality, const HistogramPeakParams& peak_params = {});

struct MultiChannelSlice {
    std::array<Image2D, 3> channels;
    GeometryRecord geometry;
    ChannelWindows windows;
};

// Extracts axial slice z from a channel volume stack, padded/cropped to the
// region's training size (or `target` when > 0). Pad fill is 0 (normalized air).
MultiChannelSlice assemble_slice(const MultiChannelVolume& mcv, int64_t z, Region region,
                                 int64_t target = 0);

struct PatientCase {
    std::string case_id;
    Region region = Region::brain;
    Volume3D cbct;
    Volume3D ct;    // may be empty at inference
    Volume3D mask;  // may be empty when regenerated from CT
    bool has_ct = false;
    bool has_mask = false;
};

void validate_case(const PatientCase& c);

// Everything downstream consumers need for one case: corrected HU volumes,
// normalized channel stacks and the windows/mask used to produce them.
struct PreprocessedCase {
    std::string case_id;
    Region region = Region::brain;
    Volume3D mask;        // regenerated from CT when available, else provided
    Volume3D cbct_corr;   // range (+ pelvis overflow) corrected, mask applied
    Volume3D ct_masked;   // mask applied; empty when has_ct is false
    MultiChannelVolume cbct_ch;
    MultiChannelVolume ct_ch;
    bool has_ct = false;
};

// Runs the per-case pipeline: mask regeneration (training only, i.e. when CT
// is present), CBCT range correction, pelvis overflow correction, mask
// application, channel construction.
PreprocessedCase preprocess_case(const PatientCase& c,
                                 const HistogramPeakParams& peak_params = {});

struct SlicePair {
    MultiChannelSlice cbct;
    MultiChannelSlice ct;  // valid only when has_ct
    bool has_ct = false;
    int64_t z = 0;
};

// Per-axial-slice channel pairs at the region's training size, z order
// preserved. CT slices are present only when the case has a CT.
std::vector<SlicePair> assemble_training_slices(const PreprocessedCase& pc, int64_t target = 0);

}  // namespace mcs
