#pragma once

#include "nn/networks.hpp"
#include "nn/tensor.hpp"

namespace mcs {

// Scalar loss helpers shared by the trainer, validation and tests. These are
// plain reductions over tensors; the autodiff graph has its own mirrored
// implementations which are cross-checked in tests.
double mse_scalar(const Tensor& a, const Tensor& b);
double mse_to_const_scalar(const Tensor& a, double target);
double bce_with_logits_scalar(const Tensor& logits, double target);

// One discriminator's objective: BCE(real -> 1) + BCE(fake -> 0).
double discriminator_loss(const Tensor& d_real_logits, const Tensor& d_fake_logits);

struct LossBreakdown {
    double gan_sct = 0.0;
    double gan_scbct = 0.0;
    double cycle_ct = 0.0;
    double cycle_cbct = 0.0;
    double identity_ct = 0.0;
    double identity_cbct = 0.0;
    double fusion_sct = 0.0;
    double total = 0.0;

    double recompute_total(const LossWeights& w) const {
        return gan_sct + gan_scbct + w.alpha * (cycle_ct + cycle_cbct) +
               w.beta * (identity_ct + identity_cbct) + fusion_sct;
    }
};

// Everything the generator objective needs, already forwarded.
struct GeneratorForwards {
    Tensor d_ct_on_sct;      // D_ct logits for G_cbct2ct(cbct)
    Tensor d_cbct_on_scbct;  // D_cbct logits for G_ct2cbct(ct)
    Tensor cycle_ct, ct;
    Tensor cycle_cbct, cbct;
    Tensor identity_ct;      // G_cbct2ct(ct)
    Tensor identity_cbct;    // G_ct2cbct(cbct)
    Tensor fused_sct;        // fusion output, single channel
    Tensor ct_ch1;           // fusion target: CT channel 1
};

LossBreakdown generator_loss(const GeneratorForwards& f, const LossWeights& w);

}  // namespace mcs
