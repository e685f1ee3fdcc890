#pragma once

#include <cmath>
#include <stdexcept>

namespace mcs {

// Stepped exponential decay: lr stays at lr0 until decay_start, then is
// multiplied by `factor` once per `every` epochs. Epochs are 0-based, so with
// decay_start=5, every=2: epochs 0..4 -> lr0, 5..6 -> lr0*f, 7..8 -> lr0*f^2.
inline double lr_at_epoch(double lr0, int epoch, int decay_start, int decay_every,
                          double factor) {
    if (epoch < 0) throw std::invalid_argument("lr_at_epoch: negative epoch");
    if (decay_every <= 0) throw std::invalid_argument("lr_at_epoch: decay_every must be >= 1");
    if (epoch < decay_start) return lr0;
    int steps = (epoch - decay_start) / decay_every + 1;
    return lr0 * std::pow(factor, steps);
}

}  // namespace mcs
