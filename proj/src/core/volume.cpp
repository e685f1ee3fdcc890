#include "core/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/errors.hpp"

namespace mcs {

using nlohmann::json;

void validate_window(const HUWindow& w) {
    if (!std::isfinite(w.lo) || !std::isfinite(w.hi) || !(w.lo < w.hi)) {
        throw ValidationError("HU window must satisfy lo < hi, got [" +
                              std::to_string(w.lo) + ", " + std::to_string(w.hi) + "]");
    }
}

void validate_volume(const Volume3D& v, const std::string& what) {
    for (int a = 0; a < 3; ++a) {
        if (v.shape[a] < 1) {
            throw ValidationError(what + ": shape components must be >= 1");
        }
        if (!(v.spacing[a] > 0.0) || !std::isfinite(v.spacing[a])) {
            throw ValidationError(what + ": spacing components must be positive");
        }
        if (!std::isfinite(v.origin[a])) {
            throw ValidationError(what + ": origin must be finite");
        }
    }
    if (static_cast<int64_t>(v.data.size()) != v.voxels()) {
        throw ValidationError(what + ": data size " + std::to_string(v.data.size()) +
                              " does not match shape product " + std::to_string(v.voxels()));
    }
    for (size_t i = 0; i < v.data.size(); ++i) {
        if (!std::isfinite(v.data[i])) {
            throw ValidationError(what + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

float window_normalize_value(float v, const HUWindow& w) {
    double c = std::clamp(static_cast<double>(v), w.lo, w.hi);
    return static_cast<float>((c - w.lo) / (w.hi - w.lo));
}

std::vector<float> window_normalize(const std::vector<float>& values, const HUWindow& w) {
    validate_window(w);
    std::vector<float> out(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw ValidationError("window_normalize: non-finite input at flat index " +
                                  std::to_string(i));
        }
        out[i] = window_normalize_value(values[i], w);
    }
    return out;
}

Volume3D window_normalize(const Volume3D& v, const HUWindow& w) {
    Volume3D out = v;
    out.data = window_normalize(v.data, w);
    return out;
}

Image2D window_normalize(const Image2D& img, const HUWindow& w) {
    Image2D out(img.ny, img.nx);
    out.data = window_normalize(img.data, w);
    return out;
}

float window_denormalize_value(float v, const HUWindow& w) {
    return static_cast<float>(w.lo + static_cast<double>(v) * (w.hi - w.lo));
}

std::vector<float> window_denormalize(const std::vector<float>& values, const HUWindow& w) {
    validate_window(w);
    constexpr double tol = 1e-6;
    std::vector<float> out(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        double v = values[i];
        if (!std::isfinite(v) || v < -tol || v > 1.0 + tol) {
            throw ValidationError("window_denormalize: value " + std::to_string(v) +
                                  " at flat index " + std::to_string(i) +
                                  " outside [0,1] tolerance");
        }
        out[i] = window_denormalize_value(static_cast<float>(std::clamp(v, 0.0, 1.0)), w);
    }
    return out;
}

Image2D window_denormalize(const Image2D& img, const HUWindow& w) {
    Image2D out(img.ny, img.nx);
    out.data = window_denormalize(img.data, w);
    return out;
}

Image2D extract_slice(const Volume3D& v, int64_t z) {
    if (z < 0 || z >= v.nz()) {
        throw ValidationError("extract_slice: z index " + std::to_string(z) + " out of range");
    }
    Image2D s(v.ny(), v.nx());
    std::memcpy(s.data.data(), v.data.data() + v.index(z, 0, 0),
                static_cast<size_t>(v.ny() * v.nx()) * sizeof(float));
    return s;
}

void insert_slice(Volume3D& v, int64_t z, const Image2D& s) {
    if (z < 0 || z >= v.nz() || s.ny != v.ny() || s.nx != v.nx()) {
        throw ValidationError("insert_slice: slice/volume shape mismatch");
    }
    std::memcpy(v.data.data() + v.index(z, 0, 0), s.data.data(),
                static_cast<size_t>(v.ny() * v.nx()) * sizeof(float));
}

PaddedSlice pad_or_crop(const Image2D& slice, int64_t target_ny, int64_t target_nx, float fill) {
    if (target_ny < 1 || target_nx < 1) {
        throw ValidationError("pad_or_crop: target shape components must be >= 1");
    }
    GeometryRecord rec;
    rec.original_shape = {slice.ny, slice.nx};
    rec.target_shape = {target_ny, target_nx};
    const int64_t src_dims[2] = {slice.ny, slice.nx};
    const int64_t dst_dims[2] = {target_ny, target_nx};
    for (int a = 0; a < 2; ++a) {
        int64_t diff = dst_dims[a] - src_dims[a];
        if (diff >= 0) {
            rec.pad_before[a] = diff / 2;  // odd extra lands on the trailing side
        } else {
            rec.crop_before[a] = (-diff) / 2;
        }
    }
    Image2D out(target_ny, target_nx, fill);
    // Copy the overlap between source and target frames.
    int64_t ny_copy = std::min(slice.ny, target_ny);
    int64_t nx_copy = std::min(slice.nx, target_nx);
    for (int64_t y = 0; y < ny_copy; ++y) {
        int64_t sy = y + rec.crop_before[0];
        int64_t dy = y + rec.pad_before[0];
        for (int64_t x = 0; x < nx_copy; ++x) {
            out.at(dy, x + rec.pad_before[1]) = slice.at(sy, x + rec.crop_before[1]);
        }
    }
    return {std::move(out), rec};
}

Image2D undo_pad_or_crop(const Image2D& slice, const GeometryRecord& rec, float fill) {
    if (slice.ny != rec.target_shape[0] || slice.nx != rec.target_shape[1]) {
        throw ValidationError("undo_pad_or_crop: slice shape does not match record target_shape");
    }
    Image2D out(rec.original_shape[0], rec.original_shape[1], fill);
    int64_t ny_copy = std::min(rec.original_shape[0], rec.target_shape[0]);
    int64_t nx_copy = std::min(rec.original_shape[1], rec.target_shape[1]);
    for (int64_t y = 0; y < ny_copy; ++y) {
        int64_t oy = y + rec.crop_before[0];
        int64_t sy = y + rec.pad_before[0];
        for (int64_t x = 0; x < nx_copy; ++x) {
            out.at(oy, x + rec.crop_before[1]) = slice.at(sy, x + rec.pad_before[1]);
        }
    }
    return out;
}

// Payloads are written verbatim on little-endian hosts; that is the only
// platform we target, enforced here once.
static_assert(std::endian::native == std::endian::little, "SVF I/O assumes a little-endian host");

std::string svf_base_path(const std::string& path) {
    for (const char* ext : {".svf", ".json", ".raw"}) {
        if (path.ends_with(ext)) return path.substr(0, path.size() - std::strlen(ext));
    }
    return path;
}

bool volume_exists(const std::string& path) {
    std::string base = svf_base_path(path);
    return std::filesystem::exists(base + ".json") && std::filesystem::exists(base + ".raw");
}

Volume3D read_volume(const std::string& path) {
    std::string base = svf_base_path(path);
    std::ifstream hdr(base + ".json");
    if (!hdr) throw IoError("cannot open volume header " + base + ".json");
    json j;
    try {
        hdr >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed volume header " + base + ".json: " + e.what());
    }

    Volume3D v;
    try {
        auto shape = j.at("shape");
        auto spacing = j.at("spacing_mm");
        auto origin = j.at("origin_mm");
        if (shape.size() != 3 || spacing.size() != 3 || origin.size() != 3) {
            throw IoError("volume header " + base + ".json: shape/spacing_mm/origin_mm must have 3 entries");
        }
        for (int a = 0; a < 3; ++a) {
            v.shape[a] = shape[a].get<int64_t>();
            v.spacing[a] = spacing[a].get<double>();
            v.origin[a] = origin[a].get<double>();
        }
        if (j.at("order").get<std::string>() != "C") {
            throw IoError("volume header " + base + ".json: only order \"C\" is supported");
        }
    } catch (const json::exception& e) {
        throw IoError("malformed volume header " + base + ".json: " + e.what());
    }

    std::string dtype;
    try {
        dtype = j.at("dtype").get<std::string>();
    } catch (const json::exception& e) {
        throw IoError("malformed volume header " + base + ".json: " + e.what());
    }
    size_t elem_size;
    if (dtype == "f32") {
        elem_size = 4;
    } else if (dtype == "i16") {
        elem_size = 2;
    } else {
        throw IoError("volume header " + base + ".json: unsupported dtype \"" + dtype + "\"");
    }

    if (v.shape[0] < 1 || v.shape[1] < 1 || v.shape[2] < 1) {
        throw IoError("volume header " + base + ".json: shape components must be >= 1");
    }
    size_t n = static_cast<size_t>(v.voxels());

    std::ifstream raw(base + ".raw", std::ios::binary);
    if (!raw) throw IoError("cannot open volume payload " + base + ".raw");
    raw.seekg(0, std::ios::end);
    size_t bytes = static_cast<size_t>(raw.tellg());
    raw.seekg(0);
    if (bytes != n * elem_size) {
        throw IoError("volume payload " + base + ".raw has " + std::to_string(bytes) +
                      " bytes, header expects " + std::to_string(n * elem_size));
    }

    v.data.resize(n);
    if (dtype == "f32") {
        raw.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(bytes));
    } else {
        std::vector<int16_t> tmp(n);
        raw.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(bytes));
        for (size_t i = 0; i < n; ++i) v.data[i] = static_cast<float>(tmp[i]);
    }
    if (!raw) throw IoError("short read on volume payload " + base + ".raw");

    validate_volume(v, "volume " + base);
    return v;
}

void write_volume(const Volume3D& v, const std::string& path, const std::string& dtype) {
    validate_volume(v, "write_volume");
    if (dtype != "f32" && dtype != "i16") {
        throw ValidationError("write_volume: unsupported dtype \"" + dtype + "\"");
    }
    std::string base = svf_base_path(path);
    std::filesystem::path dir = std::filesystem::path(base).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);

    json j;
    j["shape"] = {v.shape[0], v.shape[1], v.shape[2]};
    j["spacing_mm"] = {v.spacing[0], v.spacing[1], v.spacing[2]};
    j["origin_mm"] = {v.origin[0], v.origin[1], v.origin[2]};
    j["dtype"] = dtype;
    j["order"] = "C";
    std::ofstream hdr(base + ".json");
    if (!hdr) throw IoError("cannot write volume header " + base + ".json");
    hdr << j.dump(2) << "\n";
    if (!hdr.flush()) throw IoError("failed writing volume header " + base + ".json");

    std::ofstream raw(base + ".raw", std::ios::binary | std::ios::trunc);
    if (!raw) throw IoError("cannot write volume payload " + base + ".raw");
    if (dtype == "f32") {
        raw.write(reinterpret_cast<const char*>(v.data.data()),
                  static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    } else {
        std::vector<int16_t> tmp(v.data.size());
        for (size_t i = 0; i < v.data.size(); ++i) {
            double r = std::nearbyint(v.data[i]);
            r = std::clamp(r, -32768.0, 32767.0);
            tmp[i] = static_cast<int16_t>(r);
        }
        raw.write(reinterpret_cast<const char*>(tmp.data()),
                  static_cast<std::streamsize>(tmp.size() * sizeof(int16_t)));
    }
    if (!raw.flush()) throw IoError("failed writing volume payload " + base + ".raw");
}

}  // namespace mcs
