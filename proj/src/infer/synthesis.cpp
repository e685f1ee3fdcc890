#include "infer/synthesis.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "nn/bridge.hpp"
#include "nn/graph.hpp"

namespace mcs {

Tensor BundleSliceModel::translate(const Tensor& cbct3) {
    g_.clear();
    const int out = bundle_.g_cbct2ct->forward(g_, g_.input(cbct3));
    Tensor t = g_.out(out);
    g_.clear();
    return t;
}

Tensor BundleSliceModel::fuse(const Tensor& sct3) {
    g_.clear();
    const int out = bundle_.fusion->forward(g_, g_.input(sct3));
    Tensor t = g_.out(out);
    g_.clear();
    return t;
}

namespace {

Volume3D hu_volume_like(const Volume3D& ref) {
    Volume3D v;
    v.shape = ref.shape;
    v.spacing = ref.spacing;
    v.origin = ref.origin;
    v.data.assign(ref.data.size(), 0.0f);
    return v;
}

void insert_hu_slice(Volume3D& vol, const Image2D& norm_slice, const GeometryRecord& rec,
                     const HUWindow& w, int64_t z) {
    Image2D restored = undo_pad_or_crop(norm_slice, rec, 0.0f);
    Image2D hu = window_denormalize(restored, w);
    insert_slice(vol, z, hu);
}

}  // namespace

SctBundle generate_sct(const PreprocessedCase& pc, SliceModel& model, Region region,
                       int64_t slice_size) {
    if (pc.region != region)
        throw ValidationError("generate_sct: case '" + pc.case_id + "' is not a " +
                              region_name(region) + " case");
    const Volume3D& ref = pc.cbct_corr;
    SctBundle out;
    out.windows = make_channel_windows(region, 0.0);
    out.ch1 = hu_volume_like(ref);
    out.ch2 = hu_volume_like(ref);
    out.ch3 = hu_volume_like(ref);
    out.fused = hu_volume_like(ref);

    const int64_t nz = ref.shape[0];
    out.geometry.reserve(static_cast<size_t>(nz));
    for (int64_t z = 0; z < nz; ++z) {
        MultiChannelSlice in_slice = assemble_slice(pc.cbct_ch, z, region, slice_size);
        out.geometry.push_back(in_slice.geometry);
        Tensor x = slice_to_tensor(in_slice);
        Tensor sct3 = model.translate(x);
        if (!sct3.same_shape(x))
            throw PipelineError("generate_sct: translate changed shape to " + sct3.shape_str());
        Tensor fused1 = model.fuse(sct3);
        if (fused1.n != 1 || fused1.c != 1 || fused1.h != x.h || fused1.w != x.w)
            throw PipelineError("generate_sct: fuse produced shape " + fused1.shape_str());

        const GeometryRecord& rec = in_slice.geometry;
        insert_hu_slice(out.ch1, image_from_tensor(sct3, 0), rec, out.windows.full, z);
        insert_hu_slice(out.ch2, image_from_tensor(sct3, 1), rec, out.windows.soft, z);
        insert_hu_slice(out.ch3, image_from_tensor(sct3, 2), rec, out.windows.dense, z);
        insert_hu_slice(out.fused, image_from_tensor(fused1, 0), rec, out.windows.full, z);
    }
    return out;
}

SctBundle generate_sct(const PreprocessedCase& pc, ModelBundle& bundle, Region region,
                       int64_t slice_size) {
    BundleSliceModel model(bundle);
    return generate_sct(pc, model, region, slice_size);
}

RecombineBase parse_recombine_base(const std::string& name) {
    if (name == "auto") return RecombineBase::automatic;
    if (name == "ch1") return RecombineBase::ch1;
    if (name == "fused") return RecombineBase::fused;
    throw ValidationError("unknown recombination base '" + name + "' (auto, ch1, fused)");
}

Volume3D recombine_channels(const SctBundle& sct, Region region, RecombineBase base,
                            double eps) {
    if (!sct.ch1.same_grid(sct.ch2) || !sct.ch1.same_grid(sct.ch3) ||
        !sct.ch1.same_grid(sct.fused))
        throw ValidationError("recombine_channels: channel grids differ");
    if (base == RecombineBase::automatic)
        base = (region == Region::pelvis) ? RecombineBase::ch1 : RecombineBase::fused;

    Volume3D out = (base == RecombineBase::ch1) ? sct.ch1 : sct.fused;
    const float eps_f = static_cast<float>(eps);
    for (size_t i = 0; i < out.data.size(); ++i) {
        const float n2 = window_normalize_value(sct.ch2.data[i], sct.windows.soft);
        const float n3 = window_normalize_value(sct.ch3.data[i], sct.windows.dense);
        if (n2 > eps_f && n2 < 1.0f - eps_f) out.data[i] = sct.ch2.data[i];
        if (n3 > eps_f) out.data[i] = sct.ch3.data[i];
        out.data[i] = std::clamp(out.data[i], kAirHu, kMaxHu);
    }
    return out;
}

Volume3D apply_final_mask(const Volume3D& sct, const Volume3D& mask) {
    if (!sct.same_grid(mask)) throw ValidationError("apply_final_mask: grid mismatch");
    Volume3D out = sct;
    for (size_t i = 0; i < out.data.size(); ++i)
        if (mask.data[i] == 0.0f) out.data[i] = kAirHu;
    return out;
}

}  // namespace mcs
