#pragma once

#include <cmath>
#include <vector>

#include "nn/tensor.hpp"

namespace mcs {

// Adam with the GAN-conventional beta1 = 0.5. State is keyed by parameter
// order, so the parameter list must be stable across steps.
class Adam {
public:
    explicit Adam(std::vector<Param*> params, double beta1 = 0.5, double beta2 = 0.999,
                  double eps = 1e-8)
        : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(static_cast<size_t>(params_[i]->value.numel()), 0.0f);
            v_[i].assign(static_cast<size_t>(params_[i]->value.numel()), 0.0f);
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
        const float lr_t = static_cast<float>(lr * std::sqrt(bc2) / bc1);
        const float eps = static_cast<float>(eps_ * std::sqrt(bc2));
        for (size_t i = 0; i < params_.size(); ++i) {
            Param* p = params_[i];
            float* m = m_[i].data();
            float* v = v_[i].data();
            const float* g = p->grad.v.data();
            float* w = p->value.v.data();
            const size_t n = p->value.v.size();
            for (size_t k = 0; k < n; ++k) {
                m[k] = b1 * m[k] + (1.0f - b1) * g[k];
                v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
                w[k] -= lr_t * m[k] / (std::sqrt(v[k]) + eps);
            }
        }
    }

    const std::vector<Param*>& params() const { return params_; }

private:
    std::vector<Param*> params_;
    double b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace mcs
