#pragma once

#include <string>
#include <vector>

#include "nn/networks.hpp"
#include "preprocess/channels.hpp"

namespace mcs {

// Slice-level model seam: the real bundle in production, stubs in tests.
class SliceModel {
public:
    virtual ~SliceModel() = default;
    virtual Tensor translate(const Tensor& cbct3) = 0;  // (1,3,H,W) -> (1,3,H,W)
    virtual Tensor fuse(const Tensor& sct3) = 0;        // (1,3,H,W) -> (1,1,H,W)
};

class BundleSliceModel : public SliceModel {
public:
    explicit BundleSliceModel(ModelBundle& bundle) : bundle_(bundle) {}
    Tensor translate(const Tensor& cbct3) override;
    Tensor fuse(const Tensor& sct3) override;

private:
    ModelBundle& bundle_;
    Graph g_;
};

// All synthetic volumes for one case, in HU. ch1 and fused span the full
// window, ch2 the soft window (CT convention, level 0), ch3 the
// high-density window.
struct SctBundle {
    Volume3D ch1, ch2, ch3, fused;
    ChannelWindows windows;  // CT-side windows the HU values were scaled with
    std::vector<GeometryRecord> geometry;  // one per axial slice
};

// Runs the generator and fusion networks over every axial slice of the
// preprocessed CBCT, undoes the training-size padding, and rescales each
// channel back to HU.
SctBundle generate_sct(const PreprocessedCase& pc, SliceModel& model, Region region,
                       int64_t slice_size = 0);
SctBundle generate_sct(const PreprocessedCase& pc, ModelBundle& bundle, Region region,
                       int64_t slice_size = 0);

enum class RecombineBase { automatic, ch1, fused };
RecombineBase parse_recombine_base(const std::string& name);

// Manual channel recombination: start from the region's base volume, write
// soft-tissue HU where channel two is non-saturated, then overwrite with
// channel three's HU where it is active. eps guards against quantization
// noise triggering an insertion.
Volume3D recombine_channels(const SctBundle& sct, Region region,
                            RecombineBase base = RecombineBase::automatic, double eps = 0.005);

// Voxels outside the mask become air.
Volume3D apply_final_mask(const Volume3D& sct, const Volume3D& mask);

}  // namespace mcs
