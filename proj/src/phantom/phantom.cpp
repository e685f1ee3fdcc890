#include "phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "preprocess/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mcs {

namespace {

// rng stream ids per generation stage, so toggling one artifact never
// changes the draws of another
enum Stream : uint64_t {
    kGeom = 0,
    kTexture,
    kStructures,
    kWarp,
    kScatter,
    kNoise,
    kStreaks,
    kShell,
};

struct CosTerm {
    double fz, fy, fx, phase;
};

// Sum of low-frequency cosines over normalized coordinates, scaled to [-1,1].
struct CosField {
    std::vector<CosTerm> terms;

    static CosField random(Rng& rng, int n_terms, int max_freq) {
        CosField f;
        for (int i = 0; i < n_terms; ++i) {
            CosTerm t;
            t.fz = static_cast<double>(rng.below(static_cast<uint64_t>(max_freq) + 1));
            t.fy = 1.0 + static_cast<double>(rng.below(static_cast<uint64_t>(max_freq)));
            t.fx = 1.0 + static_cast<double>(rng.below(static_cast<uint64_t>(max_freq)));
            t.phase = rng.uniform(0.0, 2.0 * M_PI);
            f.terms.push_back(t);
        }
        return f;
    }

    double eval(double u, double v, double w) const {
        double acc = 0.0;
        for (const CosTerm& t : terms) {
            acc += std::cos(2.0 * M_PI * (t.fz * u + t.fy * v + t.fx * w) + t.phase);
        }
        return acc / static_cast<double>(terms.size());
    }
};

struct BodyGeom {
    double cz, cy, cx;
    double ay, ax;       // in-plane semi-axes (voxels) at the widest slice
    double taper = 0.1;  // in-plane shrink toward the z ends
    int64_t nz, ny, nx;

    double shrink(double z) const {
        double t = (z - cz) / (0.5 * static_cast<double>(nz));
        return 1.0 - taper * t * t;
    }
    // Normalized elliptic radius; 1.0 is the body surface.
    double rho(double z, double y, double x) const {
        double s = shrink(z);
        double dy = (y - cy) / (ay * s);
        double dx = (x - cx) / (ax * s);
        return std::sqrt(dy * dy + dx * dx);
    }
    double angle(double y, double x) const {
        return std::atan2((y - cy) / ay, (x - cx) / ax);
    }
};

struct Blob {
    double cz, cy, cx;
    double sz, sy, sx;  // semi-axes, voxels
    bool contains(double z, double y, double x) const {
        double dz = (z - cz) / sz, dy = (y - cy) / sy, dx = (x - cx) / sx;
        return dz * dz + dy * dy + dx * dx <= 1.0;
    }
};

float bilinear(const Image2D& img, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(img.ny - 1));
    x = std::clamp(x, 0.0, static_cast<double>(img.nx - 1));
    int64_t y0 = static_cast<int64_t>(y);
    int64_t x0 = static_cast<int64_t>(x);
    int64_t y1 = std::min(y0 + 1, img.ny - 1);
    int64_t x1 = std::min(x0 + 1, img.nx - 1);
    double wy = y - static_cast<double>(y0);
    double wx = x - static_cast<double>(x0);
    double v = (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
               wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
    return static_cast<float>(v);
}

double angular_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), 2.0 * M_PI);
    return std::min(d, 2.0 * M_PI - d);
}

}  // namespace

std::array<int64_t, 3> phantom_default_shape(Region region) {
    return region == Region::brain ? std::array<int64_t, 3>{16, 64, 64}
                                   : std::array<int64_t, 3>{16, 96, 96};
}

PatientCase generate_case(const PhantomSpec& spec, const std::string& case_id) {
    std::array<int64_t, 3> shape = spec.shape;
    if (shape[0] == 0) shape = phantom_default_shape(spec.region);
    const int64_t nz = shape[0], ny = shape[1], nx = shape[2];
    if (nz < 4 || ny < 16 || nx < 16) {
        throw ValidationError("phantom shape too small (need nz >= 4, ny/nx >= 16)");
    }

    Rng geom_rng(mix_seed(spec.seed, kGeom));
    BodyGeom body;
    body.nz = nz;
    body.ny = ny;
    body.nx = nx;
    body.cz = 0.5 * static_cast<double>(nz - 1);
    body.cy = 0.5 * static_cast<double>(ny - 1) + geom_rng.uniform(-1.5, 1.5);
    body.cx = 0.5 * static_cast<double>(nx - 1) + geom_rng.uniform(-1.5, 1.5);
    body.ay = static_cast<double>(ny) * geom_rng.uniform(0.345, 0.40);
    body.ax = static_cast<double>(nx) * geom_rng.uniform(0.385, 0.44);

    Rng tex_rng(mix_seed(spec.seed, kTexture));
    CosField soft_tex = CosField::random(tex_rng, 3, 3);
    double soft_amp = tex_rng.uniform(8.0, 16.0);

    Rng struct_rng(mix_seed(spec.seed, kStructures));
    double bone_base, bone_amp, bone_phase;
    std::vector<Blob> bones;
    if (spec.region == Region::brain) {
        bone_base = struct_rng.uniform(950.0, 1150.0);
        bone_amp = struct_rng.uniform(80.0, 150.0);
        bone_phase = struct_rng.uniform(0.0, 2.0 * M_PI);
    } else {
        bone_base = struct_rng.uniform(700.0, 810.0);
        bone_amp = struct_rng.uniform(30.0, 60.0);
        bone_phase = struct_rng.uniform(0.0, 2.0 * M_PI);
        double hip_dx = 0.33 * body.ax;
        bones.push_back({body.cz, body.cy, body.cx - hip_dx,
                         0.38 * nz, 0.30 * body.ay, 0.16 * body.ax});
        bones.push_back({body.cz, body.cy, body.cx + hip_dx,
                         0.38 * nz, 0.30 * body.ay, 0.16 * body.ax});
        bones.push_back({body.cz, body.cy + 0.28 * body.ay, body.cx,
                         0.30 * nz, 0.18 * body.ay, 0.14 * body.ax});
    }
    int n_cavities = 1 + static_cast<int>(struct_rng.below(2));
    std::vector<Blob> cavities;
    for (int i = 0; i < n_cavities; ++i) {
        double phi = struct_rng.uniform(0.0, 2.0 * M_PI);
        double r = struct_rng.uniform(0.10, 0.35) * std::min(body.ay, body.ax);
        Blob c;
        c.cz = body.cz + struct_rng.uniform(-0.15, 0.15) * nz;
        c.cy = body.cy + r * std::sin(phi);
        c.cx = body.cx + r * std::cos(phi);
        c.sz = struct_rng.uniform(1.5, 3.0);
        c.sy = struct_rng.uniform(2.0, 4.0);
        c.sx = struct_rng.uniform(2.0, 4.0);
        cavities.push_back(c);
    }
    Blob metal{};
    double metal_hu = 0.0;
    {
        // Drawn even when unused so the toggle does not shift later draws.
        double phi = struct_rng.uniform(0.0, 2.0 * M_PI);
        double r = 0.25 * std::min(body.ay, body.ax);
        metal.cz = body.cz + struct_rng.uniform(-0.12, 0.12) * nz;
        metal.cy = body.cy + r * std::sin(phi);
        metal.cx = body.cx + r * std::cos(phi);
        double radius_mm = struct_rng.uniform(4.0, 7.0);
        metal.sz = radius_mm / spec.spacing[0];
        metal.sy = radius_mm / spec.spacing[1];
        metal.sx = radius_mm / spec.spacing[2];
        metal_hu = struct_rng.uniform(2800.0, 2980.0);
    }

    Volume3D ct(nz, ny, nx);
    Volume3D mask(nz, ny, nx);
    ct.spacing = spec.spacing;
    mask.spacing = spec.spacing;

    for (int64_t z = 0; z < nz; ++z) {
        for (int64_t y = 0; y < ny; ++y) {
            for (int64_t x = 0; x < nx; ++x) {
                double zd = static_cast<double>(z), yd = static_cast<double>(y),
                       xd = static_cast<double>(x);
                double rho = body.rho(zd, yd, xd);
                if (rho > 1.0) {
                    ct.at(z, y, x) = -1000.0f;
                    continue;
                }
                mask.at(z, y, x) = 1.0f;
                double u = zd / nz, v = yd / ny, w = xd / nx;
                double hu = soft_amp * soft_tex.eval(u, v, w);
                if (spec.region == Region::brain) {
                    if (rho >= 0.82 && rho <= 0.95) {
                        double th = body.angle(yd, xd);
                        hu = std::clamp(bone_base + bone_amp * std::cos(2.0 * th + bone_phase),
                                        700.0, 1500.0);
                    }
                } else {
                    for (const Blob& b : bones) {
                        if (b.contains(zd, yd, xd)) {
                            double th = body.angle(yd, xd);
                            // capped well under 1000 HU so noise cannot push
                            // clean pelvis bone into the overflow band
                            hu = std::clamp(bone_base + bone_amp * std::cos(3.0 * th + bone_phase),
                                            650.0, 880.0);
                            break;
                        }
                    }
                }
                for (const Blob& c : cavities) {
                    if (c.contains(zd, yd, xd)) {
                        hu = -1000.0;
                        break;
                    }
                }
                if (spec.add_metal && metal.contains(zd, yd, xd)) hu = metal_hu;
                ct.at(z, y, x) = static_cast<float>(std::clamp(hu, -1000.0, 3000.0));
            }
        }
    }

    // CBCT: warped CT + artifacts
    Volume3D cbct = ct;
    Rng warp_rng(mix_seed(spec.seed, kWarp));
    CosField warp_y = CosField::random(warp_rng, 2, 2);
    CosField warp_x = CosField::random(warp_rng, 2, 2);
    double amp_y = spec.deform_amplitude_vox * warp_rng.uniform(0.6, 1.0);
    double amp_x = spec.deform_amplitude_vox * warp_rng.uniform(0.6, 1.0);
    if (spec.deform_amplitude_vox > 0.0) {
        for (int64_t z = 0; z < nz; ++z) {
            Image2D src = extract_slice(ct, z);
            Image2D dst(ny, nx);
            double u = static_cast<double>(z) / nz;
            for (int64_t y = 0; y < ny; ++y) {
                for (int64_t x = 0; x < nx; ++x) {
                    double v = static_cast<double>(y) / ny, w = static_cast<double>(x) / nx;
                    double sy = y + amp_y * warp_y.eval(u, v, w);
                    double sx = x + amp_x * warp_x.eval(u, v, w);
                    dst.at(y, x) = bilinear(src, sy, sx);
                }
            }
            insert_slice(cbct, z, dst);
        }
    }

    Rng scatter_rng(mix_seed(spec.seed, kScatter));
    CosField scatter = CosField::random(scatter_rng, 2, 2);
    if (spec.scatter_amplitude > 0.0) {
        for (int64_t z = 0; z < nz; ++z) {
            for (int64_t y = 0; y < ny; ++y) {
                for (int64_t x = 0; x < nx; ++x) {
                    double u = static_cast<double>(z) / nz, v = static_cast<double>(y) / ny,
                           w = static_cast<double>(x) / nx;
                    double g = 1.0 + spec.scatter_amplitude * scatter.eval(u, v, w);
                    float& hu = cbct.at(z, y, x);
                    hu = static_cast<float>((hu + 1024.0) * g - 1024.0);
                }
            }
        }
    }

    if (spec.soft_level_shift != 0.0) {
        for (float& hu : cbct.data) {
            double a = std::abs(hu);
            double w = a <= 200.0 ? 1.0 : std::clamp((300.0 - a) / 100.0, 0.0, 1.0);
            hu = static_cast<float>(hu + spec.soft_level_shift * w);
        }
    }

    Rng streak_rng(mix_seed(spec.seed, kStreaks));
    for (int k = 0; k < spec.streak_count; ++k) {
        int64_t z = static_cast<int64_t>(streak_rng.below(static_cast<uint64_t>(nz)));
        std::vector<std::pair<int64_t, int64_t>> dense;
        for (int64_t y = 0; y < ny; ++y) {
            for (int64_t x = 0; x < nx; ++x) {
                if (cbct.at(z, y, x) > 600.0f) dense.emplace_back(y, x);
            }
        }
        double py = body.cy, px = body.cx;
        if (!dense.empty()) {
            auto [dy, dx] = dense[streak_rng.below(dense.size())];
            py = static_cast<double>(dy);
            px = static_cast<double>(dx);
        }
        double theta = streak_rng.uniform(0.0, M_PI);
        double amp = streak_rng.uniform(200.0, 600.0) * (streak_rng.below(2) == 0 ? 1.0 : -1.0);
        Image2D delta(ny, nx);
        std::vector<uint8_t> hit(static_cast<size_t>(ny * nx), 0);
        double diag = std::hypot(static_cast<double>(ny), static_cast<double>(nx));
        for (double t = -diag; t <= diag; t += 0.5) {
            int64_t y = static_cast<int64_t>(std::lround(py + t * std::sin(theta)));
            int64_t x = static_cast<int64_t>(std::lround(px + t * std::cos(theta)));
            if (y < 0 || y >= ny || x < 0 || x >= nx) continue;
            size_t i = static_cast<size_t>(y * nx + x);
            if (!hit[i]) {
                hit[i] = 1;
                delta.at(y, x) = static_cast<float>(amp);
            }
        }
        for (int64_t y = 0; y < ny; ++y) {
            for (int64_t x = 0; x < nx; ++x) {
                cbct.at(z, y, x) += delta.at(y, x);
            }
        }
    }

    if (spec.add_overflow_artifact) {
        Rng shell_rng(mix_seed(spec.seed, kShell));
        double sector_center = shell_rng.uniform(0.0, 2.0 * M_PI);
        double sector_half = shell_rng.uniform(M_PI / 4.0, M_PI / 2.0);
        for (int64_t z = 0; z < nz; ++z) {
            for (int64_t y = 0; y < ny; ++y) {
                for (int64_t x = 0; x < nx; ++x) {
                    double rho = body.rho(z, y, x);
                    if (rho < 0.93 || rho > 1.0) continue;
                    double th = body.angle(static_cast<double>(y), static_cast<double>(x));
                    if (angular_distance(th, sector_center) > sector_half) continue;
                    cbct.at(z, y, x) = static_cast<float>(shell_rng.uniform(1250.0, 2150.0));
                }
            }
        }
    }

    Rng noise_rng(mix_seed(spec.seed, kNoise));
    if (spec.noise_sigma > 0.0) {
        for (float& hu : cbct.data) {
            hu = static_cast<float>(hu + noise_rng.normal(0.0, spec.noise_sigma));
        }
    }

    for (float& hu : cbct.data) hu = std::clamp(hu, -1024.0f, 3000.0f);
    if (spec.add_range_offset) {
        for (float& hu : cbct.data) hu += 1024.0f;
    }

    PatientCase out;
    out.case_id = case_id;
    out.region = spec.region;
    out.cbct = std::move(cbct);
    out.ct = std::move(ct);
    out.mask = std::move(mask);
    out.has_ct = true;
    out.has_mask = true;
    return out;
}

std::string phantom_case_id(Region region, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03d", region_name(region).c_str(), index);
    return buf;
}

std::vector<PhantomSpec> plan_dataset(const PhantomDatasetOptions& opts) {
    if (opts.n_cases < 1) throw ValidationError("phantom dataset needs n_cases >= 1");
    std::vector<PhantomSpec> specs;
    for (int i = 0; i < opts.n_cases; ++i) {
        Rng plan(mix_seed(opts.base_seed, 0x70000000ULL + static_cast<uint64_t>(i)));
        PhantomSpec s;
        s.seed = mix_seed(opts.base_seed, static_cast<uint64_t>(i));
        s.region = opts.region;
        s.shape = opts.shape;
        int pattern = i % 8;
        bool clean = pattern == 0;
        s.soft_level_shift = clean ? 0.0 : plan.uniform(-85.0, 85.0);
        if (pattern == 7) {
            s.soft_level_shift = plan.uniform(60.0, 85.0) * (plan.below(2) == 0 ? 1.0 : -1.0);
        }
        s.scatter_amplitude = clean ? 0.0
                              : pattern == 7 ? plan.uniform(0.07, 0.09)
                                             : plan.uniform(0.04, 0.07);
        s.streak_count = clean ? 0
                         : pattern == 5 ? 4 + static_cast<int>(plan.below(3))
                                        : 1 + static_cast<int>(plan.below(3));
        s.deform_amplitude_vox = clean ? 0.0 : plan.uniform(0.8, 1.6);
        s.noise_sigma = 20.0;
        s.add_metal = pattern == 3 || pattern == 6;
        s.add_overflow_artifact = pattern == 4 || pattern == 6;
        s.add_range_offset = pattern == 2;
        specs.push_back(s);
    }
    return specs;
}

void generate_dataset(const PhantomDatasetOptions& opts, const std::string& out_root) {
    std::string manifest_path =
        (fs::path(out_root) / ("manifest_" + region_name(opts.region) + ".json")).string();
    if (fs::exists(manifest_path)) {
        throw ValidationError("phantom output " + manifest_path +
                              " already exists, refusing to overwrite");
    }
    std::vector<PhantomSpec> specs = plan_dataset(opts);
    fs::create_directories(out_root);

    json cases = json::array();
    for (size_t i = 0; i < specs.size(); ++i) {
        const PhantomSpec& s = specs[i];
        std::string case_id = phantom_case_id(s.region, static_cast<int>(i));
        PatientCase c = generate_case(s, case_id);
        write_case(out_root, c);
        cases.push_back({{"case_id", case_id},
                         {"seed", s.seed},
                         {"region", region_name(s.region)},
                         {"shape", c.cbct.shape},
                         {"spacing_mm", s.spacing},
                         {"soft_level_shift", s.soft_level_shift},
                         {"scatter_amplitude", s.scatter_amplitude},
                         {"streak_count", s.streak_count},
                         {"deform_amplitude_vox", s.deform_amplitude_vox},
                         {"noise_sigma", s.noise_sigma},
                         {"add_metal", s.add_metal},
                         {"add_overflow_artifact", s.add_overflow_artifact},
                         {"add_range_offset", s.add_range_offset}});
    }

    json j;
    j["format"] = "mcsynth-phantom/1";
    j["region"] = region_name(opts.region);
    j["n_cases"] = opts.n_cases;
    j["base_seed"] = opts.base_seed;
    j["cases"] = cases;
    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot write " + manifest_path);
    out << j.dump(2) << "\n";
    if (!out.flush()) throw IoError("failed writing " + manifest_path);
}

}  // namespace mcs
