#pragma once

#include <algorithm>
#include <stdexcept>

#include "nn/tensor.hpp"
#include "preprocess/channels.hpp"

namespace mcs {

// Stacks the three normalized channel images of a slice into a (1,3,H,W)
// network input.
inline Tensor slice_to_tensor(const MultiChannelSlice& s) {
    const int64_t ny = s.channels[0].ny, nx = s.channels[0].nx;
    Tensor t(1, 3, ny, nx);
    for (int c = 0; c < 3; ++c) {
        const Image2D& img = s.channels[static_cast<size_t>(c)];
        if (img.ny != ny || img.nx != nx)
            throw std::invalid_argument("slice_to_tensor: channel size mismatch");
        std::copy(img.data.begin(), img.data.end(), t.at(0, c));
    }
    return t;
}

inline Image2D image_from_tensor(const Tensor& t, int64_t c) {
    if (c < 0 || c >= t.c) throw std::invalid_argument("image_from_tensor: bad channel");
    Image2D img;
    img.ny = t.h;
    img.nx = t.w;
    img.data.assign(t.at(0, c), t.at(0, c) + t.h * t.w);
    return img;
}

}  // namespace mcs
