#include "preprocess/channels.hpp"

#include "core/errors.hpp"
#include "preprocess/corrections.hpp"
#include "preprocess/mask_ops.hpp"

namespace mcs {

std::string region_name(Region r) { return r == Region::brain ? "brain" : "pelvis"; }

Region parse_region(const std::string& name) {
    if (name == "brain") return Region::brain;
    if (name == "pelvis") return Region::pelvis;
    throw ValidationError("unknown region \"" + name + "\" (expected brain or pelvis)");
}

int64_t region_target_size(Region r) { return r == Region::brain ? 304 : 448; }

double region_soft_halfwidth(Region r) { return r == Region::brain ? 100.0 : 150.0; }

ChannelWindows make_channel_windows(Region region, double soft_level, bool fallback) {
    ChannelWindows w;
    w.full = {-1024.0, 3000.0};
    w.dense = {600.0, 3000.0};
    w.soft_halfwidth = region_soft_halfwidth(region);
    w.soft_level = soft_level;
    w.soft = {soft_level - w.soft_halfwidth, soft_level + w.soft_halfwidth};
    w.soft_level_is_fallback = fallback;
    return w;
}

void validate_case(const PatientCase& c) {
    if (c.case_id.empty()) throw ValidationError("case has empty case_id");
    validate_volume(c.cbct, "case " + c.case_id + " cbct");
    if (c.has_ct) {
        validate_volume(c.ct, "case " + c.case_id + " ct");
        if (!c.ct.same_grid(c.cbct)) {
            throw ValidationError("case " + c.case_id + ": ct and cbct grids differ");
        }
    }
    if (c.has_mask) {
        validate_volume(c.mask, "case " + c.case_id + " mask");
        if (!c.mask.same_grid(c.cbct)) {
            throw ValidationError("case " + c.case_id + ": mask and cbct grids differ");
        }
        for (float v : c.mask.data) {
            if (v != 0.0f && v != 1.0f) {
                throw ValidationError("case " + c.case_id + ": mask is not binary");
            }
        }
    }
    if (!c.has_ct && !c.has_mask) {
        throw ValidationError("case " + c.case_id + ": needs a CT (to regenerate the mask) or a mask");
    }
}

MultiChannelVolume build_channels(const Volume3D& vol, const Volume3D& mask, Region region,
                                  Modality modality, const HistogramPeakParams& peak_params) {
    Volume3D masked = apply_mask_hu(vol, mask);
    ChannelWindows w;
    if (modality == Modality::ct) {
        w = make_channel_windows(region, 0.0);
    } else {
        PeakResult peak = find_soft_tissue_level(masked, mask, peak_params);
        w = make_channel_windows(region, peak.found ? peak.level : 0.0, !peak.found);
    }
    MultiChannelVolume out;
    out.windows = w;
    out.ch[0] = window_normalize(masked, w.full);
    out.ch[1] = window_normalize(masked, w.soft);
    out.ch[2] = window_normalize(masked, w.dense);
    return out;
}

MultiChannelSlice assemble_slice(const MultiChannelVolume& mcv, int64_t z, Region region,
                                 int64_t target) {
    if (target <= 0) target = region_target_size(region);
    MultiChannelSlice s;
    s.windows = mcv.windows;
    for (int c = 0; c < 3; ++c) {
        PaddedSlice p = pad_or_crop(extract_slice(mcv.ch[static_cast<size_t>(c)], z),
                                    target, target, 0.0f);
        s.channels[static_cast<size_t>(c)] = std::move(p.image);
        s.geometry = p.record;
    }
    return s;
}

PreprocessedCase preprocess_case(const PatientCase& c, const HistogramPeakParams& peak_params) {
    validate_case(c);
    PreprocessedCase pc;
    pc.case_id = c.case_id;
    pc.region = c.region;
    pc.has_ct = c.has_ct;

    pc.mask = c.has_ct ? regenerate_mask(c.ct) : c.mask;

    Volume3D cbct = correct_cbct_range(c.cbct);
    if (c.region == Region::pelvis) {
        cbct = overflow_correct(cbct, pc.mask);
    }
    pc.cbct_corr = apply_mask_hu(cbct, pc.mask);
    pc.cbct_ch = build_channels(cbct, pc.mask, c.region, Modality::cbct, peak_params);
    if (c.has_ct) {
        pc.ct_masked = apply_mask_hu(c.ct, pc.mask);
        pc.ct_ch = build_channels(c.ct, pc.mask, c.region, Modality::ct, peak_params);
    }
    return pc;
}

std::vector<SlicePair> assemble_training_slices(const PreprocessedCase& pc, int64_t target) {
    std::vector<SlicePair> out;
    const int64_t nz = pc.cbct_ch.ch[0].nz();
    out.reserve(static_cast<size_t>(nz));
    for (int64_t z = 0; z < nz; ++z) {
        SlicePair p;
        p.z = z;
        p.has_ct = pc.has_ct;
        p.cbct = assemble_slice(pc.cbct_ch, z, pc.region, target);
        if (pc.has_ct) p.ct = assemble_slice(pc.ct_ch, z, pc.region, target);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace mcs
