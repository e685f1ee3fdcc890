#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mcs {

constexpr float kAirHu = -1024.0f;
constexpr float kMaxHu = 3000.0f;

// 3D scalar grid in C order (z slowest). Values are HU for images, {0,1} for
// masks and Gy for dose. Data is float32 internally; i16 files are promoted
// on load.
struct Volume3D {
    std::array<int64_t, 3> shape{0, 0, 0};       // (nz, ny, nx)
    std::array<double, 3> spacing{1.0, 1.0, 1.0};  // (sz, sy, sx) mm
    std::array<double, 3> origin{0.0, 0.0, 0.0};   // (z, y, x) mm
    std::vector<float> data;

    Volume3D() = default;
    Volume3D(int64_t nz, int64_t ny, int64_t nx, float fill = 0.0f)
        : shape{nz, ny, nx}, data(static_cast<size_t>(nz * ny * nx), fill) {}

    int64_t nz() const { return shape[0]; }
    int64_t ny() const { return shape[1]; }
    int64_t nx() const { return shape[2]; }
    int64_t voxels() const { return shape[0] * shape[1] * shape[2]; }

    size_t index(int64_t z, int64_t y, int64_t x) const {
        return static_cast<size_t>((z * shape[1] + y) * shape[2] + x);
    }
    float& at(int64_t z, int64_t y, int64_t x) { return data[index(z, y, x)]; }
    float at(int64_t z, int64_t y, int64_t x) const { return data[index(z, y, x)]; }

    bool same_grid(const Volume3D& o) const {
        return shape == o.shape && spacing == o.spacing && origin == o.origin;
    }
};

// Validates shape/spacing invariants and finiteness. Throws ValidationError.
void validate_volume(const Volume3D& v, const std::string& what);

struct Image2D {
    int64_t ny = 0, nx = 0;
    std::vector<float> data;

    Image2D() = default;
    Image2D(int64_t ny_, int64_t nx_, float fill = 0.0f)
        : ny(ny_), nx(nx_), data(static_cast<size_t>(ny_ * nx_), fill) {}

    float& at(int64_t y, int64_t x) { return data[static_cast<size_t>(y * nx + x)]; }
    float at(int64_t y, int64_t x) const { return data[static_cast<size_t>(y * nx + x)]; }
};

Image2D extract_slice(const Volume3D& v, int64_t z);
void insert_slice(Volume3D& v, int64_t z, const Image2D& s);

// HU clip range. lo < hi enforced at use sites.
struct HUWindow {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
};

void validate_window(const HUWindow& w);

// out = (clip(v, lo, hi) - lo) / (hi - lo), elementwise into [0, 1].
// Rejects non-finite input.
std::vector<float> window_normalize(const std::vector<float>& values, const HUWindow& w);
Volume3D window_normalize(const Volume3D& v, const HUWindow& w);
Image2D window_normalize(const Image2D& v, const HUWindow& w);
float window_normalize_value(float v, const HUWindow& w);

// out = lo + v * (hi - lo). The vector/image forms reject values outside
// [0,1] beyond 1e-6; the scalar form is the unchecked affine map.
std::vector<float> window_denormalize(const std::vector<float>& values, const HUWindow& w);
Image2D window_denormalize(const Image2D& v, const HUWindow& w);
float window_denormalize_value(float v, const HUWindow& w);

// Bookkeeping needed to undo a centered pad/crop. For odd amounts the extra
// voxel goes on the trailing (high-index) side.
struct GeometryRecord {
    std::array<int64_t, 2> original_shape{0, 0};  // (ny, nx)
    std::array<int64_t, 2> target_shape{0, 0};
    std::array<int64_t, 2> pad_before{0, 0};
    std::array<int64_t, 2> crop_before{0, 0};

    bool operator==(const GeometryRecord&) const = default;
};

struct PaddedSlice {
    Image2D image;
    GeometryRecord record;
};

PaddedSlice pad_or_crop(const Image2D& slice, int64_t target_ny, int64_t target_nx, float fill);
Image2D undo_pad_or_crop(const Image2D& slice, const GeometryRecord& record, float fill);

// SVF volume file format: a pair <name>.json + <name>.raw. The JSON header
// carries shape/spacing_mm/origin_mm/dtype/order; the raw payload is
// little-endian C order. Round trips are bitwise for f32 and value-exact for
// i16. `path` may be given with or without a .svf/.json/.raw suffix.
Volume3D read_volume(const std::string& path);
void write_volume(const Volume3D& v, const std::string& path, const std::string& dtype = "f32");
bool volume_exists(const std::string& path);

// Resolves "<dir>/name[.svf|.json|.raw]" to the extension-free base path.
std::string svf_base_path(const std::string& path);

}  // namespace mcs
