#include "preprocess/mask_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/errors.hpp"

namespace mcs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D lower-envelope pass of the exact squared distance transform.
// Minimizes f[i] + s2*(x-i)^2 over i for every x. INF entries carry "no seed".
void dt1d(const double* f, double* d, int* v, double* z, int64_t n, double s2) {
    int64_t k = -1;
    for (int64_t q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        double fq = f[q] + s2 * static_cast<double>(q) * static_cast<double>(q);
        double s = 0.0;
        while (k >= 0) {
            int64_t p = v[k];
            double fp = f[p] + s2 * static_cast<double>(p) * static_cast<double>(p);
            s = (fq - fp) / (2.0 * s2 * static_cast<double>(q - p));
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = static_cast<int>(q);
        z[k] = (k == 0) ? -kInf : s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        std::fill(d, d + n, kInf);
        return;
    }
    int64_t j = 0;
    for (int64_t x = 0; x < n; ++x) {
        while (z[j + 1] < static_cast<double>(x)) ++j;
        double dx = static_cast<double>(x - v[j]);
        d[x] = s2 * dx * dx + f[v[j]];
    }
}

std::vector<double> edt_squared_impl(const std::vector<float>& seeds,
                                     const std::array<int64_t, 3>& shape,
                                     const std::array<double, 3>& spacing) {
    const int64_t nz = shape[0], ny = shape[1], nx = shape[2];
    std::vector<double> d(static_cast<size_t>(nz * ny * nx));
    for (size_t i = 0; i < d.size(); ++i) d[i] = seeds[i] > 0.5f ? 0.0 : kInf;

    int64_t nmax = std::max({nz, ny, nx});
    std::vector<double> f(nmax), g(nmax), z(nmax + 1);
    std::vector<int> v(nmax);

    // x pass
    double s2 = spacing[2] * spacing[2];
    for (int64_t zz = 0; zz < nz; ++zz) {
        for (int64_t yy = 0; yy < ny; ++yy) {
            double* row = d.data() + (zz * ny + yy) * nx;
            dt1d(row, g.data(), v.data(), z.data(), nx, s2);
            std::copy(g.begin(), g.begin() + nx, row);
        }
    }
    // y pass
    s2 = spacing[1] * spacing[1];
    for (int64_t zz = 0; zz < nz; ++zz) {
        for (int64_t xx = 0; xx < nx; ++xx) {
            for (int64_t yy = 0; yy < ny; ++yy) f[yy] = d[(zz * ny + yy) * nx + xx];
            dt1d(f.data(), g.data(), v.data(), z.data(), ny, s2);
            for (int64_t yy = 0; yy < ny; ++yy) d[(zz * ny + yy) * nx + xx] = g[yy];
        }
    }
    // z pass
    s2 = spacing[0] * spacing[0];
    for (int64_t yy = 0; yy < ny; ++yy) {
        for (int64_t xx = 0; xx < nx; ++xx) {
            for (int64_t zz = 0; zz < nz; ++zz) f[zz] = d[(zz * ny + yy) * nx + xx];
            dt1d(f.data(), g.data(), v.data(), z.data(), nz, s2);
            for (int64_t zz = 0; zz < nz; ++zz) d[(zz * ny + yy) * nx + xx] = g[zz];
        }
    }
    return d;
}

Volume3D like(const Volume3D& v, float fill = 0.0f) {
    Volume3D out(v.nz(), v.ny(), v.nx(), fill);
    out.spacing = v.spacing;
    out.origin = v.origin;
    return out;
}

// Distance (voxels) from a voxel to the nearest out-of-bounds position.
int64_t face_distance(const std::array<int64_t, 3>& shape, int64_t z, int64_t y, int64_t x) {
    return std::min({z + 1, shape[0] - z, y + 1, shape[1] - y, x + 1, shape[2] - x});
}

}  // namespace

std::vector<double> edt_squared(const Volume3D& seeds) {
    return edt_squared_impl(seeds.data, seeds.shape, seeds.spacing);
}

Volume3D binary_threshold(const Volume3D& v, float thr) {
    Volume3D out = like(v);
    for (size_t i = 0; i < v.data.size(); ++i) out.data[i] = v.data[i] > thr ? 1.0f : 0.0f;
    return out;
}

Volume3D binary_dilate(const Volume3D& mask, int radius) {
    if (radius < 0) throw ValidationError("binary_dilate: radius must be >= 0");
    if (radius == 0) return mask;
    std::array<double, 3> unit{1.0, 1.0, 1.0};
    std::vector<double> d2 = edt_squared_impl(mask.data, mask.shape, unit);
    double r2 = static_cast<double>(radius) * radius;
    Volume3D out = like(mask);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = d2[i] <= r2 ? 1.0f : 0.0f;
    return out;
}

Volume3D binary_erode(const Volume3D& mask, int radius) {
    if (radius < 0) throw ValidationError("binary_erode: radius must be >= 0");
    if (radius == 0) return mask;
    Volume3D inv = like(mask);
    for (size_t i = 0; i < mask.data.size(); ++i) inv.data[i] = mask.data[i] > 0.5f ? 0.0f : 1.0f;
    std::array<double, 3> unit{1.0, 1.0, 1.0};
    std::vector<double> d2 = edt_squared_impl(inv.data, inv.shape, unit);
    double r2 = static_cast<double>(radius) * radius;
    Volume3D out = like(mask);
    for (int64_t z = 0; z < mask.nz(); ++z) {
        for (int64_t y = 0; y < mask.ny(); ++y) {
            for (int64_t x = 0; x < mask.nx(); ++x) {
                size_t i = mask.index(z, y, x);
                bool keep = mask.data[i] > 0.5f && d2[i] > r2 &&
                            face_distance(mask.shape, z, y, x) > radius;
                out.data[i] = keep ? 1.0f : 0.0f;
            }
        }
    }
    return out;
}

Volume3D binary_close(const Volume3D& mask, int radius) {
    if (radius < 0) throw ValidationError("binary_close: radius must be >= 0");
    if (radius == 0) return mask;
    // Dilate+erode on a domain padded by `radius` so the erosion never sees
    // the volume boundary as background; keeps closing extensive
    // (close(A) superset of A) even when the mask touches a face.
    const int64_t r = radius;
    const int64_t nz = mask.nz(), ny = mask.ny(), nx = mask.nx();
    Volume3D padded(nz + 2 * r, ny + 2 * r, nx + 2 * r, 0.0f);
    padded.spacing = mask.spacing;
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x)
                padded.at(z + r, y + r, x + r) = mask.at(z, y, x);
    Volume3D closed = binary_erode(binary_dilate(padded, radius), radius);
    Volume3D out = like(mask);
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x)
                out.at(z, y, x) = closed.at(z + r, y + r, x + r);
    return out;
}

Volume3D fill_holes_per_slice(const Volume3D& mask) {
    Volume3D out = mask;
    const int64_t ny = mask.ny(), nx = mask.nx();
    std::vector<uint8_t> reach(static_cast<size_t>(ny * nx));
    std::vector<int64_t> stack;
    for (int64_t z = 0; z < mask.nz(); ++z) {
        std::fill(reach.begin(), reach.end(), 0);
        stack.clear();
        auto push = [&](int64_t y, int64_t x) {
            int64_t i = y * nx + x;
            if (!reach[i] && mask.at(z, y, x) <= 0.5f) {
                reach[i] = 1;
                stack.push_back(i);
            }
        };
        for (int64_t y = 0; y < ny; ++y) {
            push(y, 0);
            push(y, nx - 1);
        }
        for (int64_t x = 0; x < nx; ++x) {
            push(0, x);
            push(ny - 1, x);
        }
        while (!stack.empty()) {
            int64_t i = stack.back();
            stack.pop_back();
            int64_t y = i / nx, x = i % nx;
            if (y > 0) push(y - 1, x);
            if (y + 1 < ny) push(y + 1, x);
            if (x > 0) push(y, x - 1);
            if (x + 1 < nx) push(y, x + 1);
        }
        for (int64_t y = 0; y < ny; ++y) {
            for (int64_t x = 0; x < nx; ++x) {
                if (mask.at(z, y, x) <= 0.5f && !reach[y * nx + x]) out.at(z, y, x) = 1.0f;
            }
        }
    }
    return out;
}

Volume3D largest_component(const Volume3D& mask) {
    const int64_t nz = mask.nz(), ny = mask.ny(), nx = mask.nx();
    std::vector<int32_t> label(mask.data.size(), 0);
    std::vector<int64_t> queue;
    int32_t next_label = 0;
    int64_t best_size = 0;
    int32_t best_label = 0;
    for (int64_t start = 0; start < static_cast<int64_t>(mask.data.size()); ++start) {
        if (mask.data[start] <= 0.5f || label[start] != 0) continue;
        ++next_label;
        int64_t size = 0;
        queue.clear();
        queue.push_back(start);
        label[start] = next_label;
        while (!queue.empty()) {
            int64_t i = queue.back();
            queue.pop_back();
            ++size;
            int64_t x = i % nx;
            int64_t y = (i / nx) % ny;
            int64_t z = i / (nx * ny);
            auto visit = [&](int64_t zz, int64_t yy, int64_t xx) {
                int64_t j = (zz * ny + yy) * nx + xx;
                if (mask.data[j] > 0.5f && label[j] == 0) {
                    label[j] = next_label;
                    queue.push_back(j);
                }
            };
            if (z > 0) visit(z - 1, y, x);
            if (z + 1 < nz) visit(z + 1, y, x);
            if (y > 0) visit(z, y - 1, x);
            if (y + 1 < ny) visit(z, y + 1, x);
            if (x > 0) visit(z, y, x - 1);
            if (x + 1 < nx) visit(z, y, x + 1);
        }
        if (size > best_size) {
            best_size = size;
            best_label = next_label;
        }
    }
    Volume3D out = like(mask);
    if (best_label != 0) {
        for (size_t i = 0; i < mask.data.size(); ++i) {
            out.data[i] = label[i] == best_label ? 1.0f : 0.0f;
        }
    }
    return out;
}

int64_t count_foreground(const Volume3D& mask) {
    int64_t n = 0;
    for (float v : mask.data) n += v > 0.5f ? 1 : 0;
    return n;
}

Volume3D regenerate_mask(const Volume3D& ct, const MaskParams& params) {
    Volume3D thr = binary_threshold(ct, params.threshold_hu);
    if (count_foreground(thr) == 0) {
        throw ValidationError("regenerate_mask: no voxel above " +
                              std::to_string(params.threshold_hu) +
                              " HU, input does not look like anatomy");
    }
    Volume3D m = binary_dilate(thr, params.dilate_radius);
    m = binary_close(m, params.close_radius);
    m = fill_holes_per_slice(m);
    return largest_component(m);
}

}  // namespace mcs
