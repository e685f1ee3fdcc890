#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace mcs {

// Dense NCHW float tensor. Batch is kept for generality though training runs
// with batch_size 1.
struct Tensor {
    int64_t n = 0, c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int64_t n_, int64_t c_, int64_t h_, int64_t w_, float fill = 0.0f)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<size_t>(n_ * c_ * h_ * w_), fill) {}

    int64_t numel() const { return n * c * h * w; }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
    float* at(int64_t ni, int64_t ci) {
        return v.data() + ((ni * c + ci) * h * w);
    }
    const float* at(int64_t ni, int64_t ci) const {
        return v.data() + ((ni * c + ci) * h * w);
    }
    void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

// Trainable parameter with its gradient accumulator. `frozen` suppresses
// gradient computation (used for discriminators during generator updates).
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool frozen = false;

    void init_shape(int64_t n, int64_t c, int64_t h, int64_t w) {
        value = Tensor(n, c, h, w);
        grad = Tensor(n, c, h, w);
    }
    void zero_grad() { grad.zero(); }
};

}  // namespace mcs
