#include "train/losses.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace mcs {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

}  // namespace

double mse_scalar(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    double acc = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        double d = double(a.v[i]) - double(b.v[i]);
        acc += d * d;
    }
    return acc / double(a.v.size());
}

double mse_to_const_scalar(const Tensor& a, double target) {
    double acc = 0.0;
    for (float x : a.v) {
        double d = double(x) - target;
        acc += d * d;
    }
    return acc / double(a.v.size());
}

double bce_with_logits_scalar(const Tensor& logits, double target) {
    // max(z,0) - z*t + log(1+exp(-|z|)), averaged.
    double acc = 0.0;
    for (float zf : logits.v) {
        double z = zf;
        acc += std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
    }
    return acc / double(logits.v.size());
}

double discriminator_loss(const Tensor& d_real_logits, const Tensor& d_fake_logits) {
    require_same_shape(d_real_logits, d_fake_logits, "discriminator_loss");
    return bce_with_logits_scalar(d_real_logits, 1.0) + bce_with_logits_scalar(d_fake_logits, 0.0);
}

LossBreakdown generator_loss(const GeneratorForwards& f, const LossWeights& w) {
    LossBreakdown out;
    out.gan_sct = mse_to_const_scalar(f.d_ct_on_sct, 1.0);
    out.gan_scbct = mse_to_const_scalar(f.d_cbct_on_scbct, 1.0);
    out.cycle_ct = mse_scalar(f.cycle_ct, f.ct);
    out.cycle_cbct = mse_scalar(f.cycle_cbct, f.cbct);
    out.identity_ct = mse_scalar(f.identity_ct, f.ct);
    out.identity_cbct = mse_scalar(f.identity_cbct, f.cbct);
    out.fusion_sct = mse_scalar(f.fused_sct, f.ct_ch1);
    out.total = out.recompute_total(w);
    return out;
}

}  // namespace mcs
