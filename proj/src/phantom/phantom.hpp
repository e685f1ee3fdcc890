#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "preprocess/channels.hpp"

namespace mcs {

// Procedural paired CBCT/CT/mask generator. Generation is a pure function of
// the spec: equal specs give bitwise-equal volumes.
struct PhantomSpec {
    uint64_t seed = 0;
    Region region = Region::brain;
    std::array<int64_t, 3> shape{0, 0, 0};         // 0 = region default
    std::array<double, 3> spacing{2.5, 2.0, 2.0};  // mm
    double soft_level_shift = 0.0;                 // HU added to CBCT soft tissue
    double scatter_amplitude = 0.0;                // fraction of (HU + 1024)
    int streak_count = 0;
    double deform_amplitude_vox = 0.0;             // in-plane warp, 0 disables
    double noise_sigma = 20.0;                     // HU
    bool add_metal = false;
    bool add_overflow_artifact = false;            // bright shell near the surface
    bool add_range_offset = false;                 // store CBCT shifted by +1024
};

std::array<int64_t, 3> phantom_default_shape(Region region);

PatientCase generate_case(const PhantomSpec& spec, const std::string& case_id);

// Writes n cases under `out_root` in the dataset layout, cycling artifact
// toggles so every preprocessing branch is exercised, and records the
// generation parameters in <out_root>/manifest.json.
struct PhantomDatasetOptions {
    int n_cases = 8;
    Region region = Region::brain;
    uint64_t base_seed = 0;
    std::array<int64_t, 3> shape{0, 0, 0};  // 0 = region default
};
std::vector<PhantomSpec> plan_dataset(const PhantomDatasetOptions& opts);
void generate_dataset(const PhantomDatasetOptions& opts, const std::string& out_root);

std::string phantom_case_id(Region region, int index);

}  // namespace mcs
