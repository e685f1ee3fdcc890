#pragma once

#include <string>
#include <vector>

#include "core/rng.hpp"
#include "nn/graph.hpp"

namespace mcs {

// Conv weights drawn from N(0, 0.02), biases zero.
struct Conv2d {
    Param w, b;
    int k = 3, stride = 1, pad = 1;
    bool has_bias = true;

    void init(Rng& rng, const std::string& name, int64_t in_ch, int64_t out_ch, int kk,
              int stride_, int pad_, bool bias = true) {
        k = kk;
        stride = stride_;
        pad = pad_;
        has_bias = bias;
        w.name = name + ".w";
        w.init_shape(out_ch, in_ch, kk, kk);
        for (float& v : w.value.v) v = static_cast<float>(rng.normal(0.0, 0.02));
        if (has_bias) {
            b.name = name + ".b";
            b.init_shape(1, 1, 1, out_ch);
        }
    }
    int forward(Graph& g, int x) { return g.conv2d(x, &w, has_bias ? &b : nullptr, stride, pad); }
    void collect(std::vector<Param*>& out) {
        out.push_back(&w);
        if (has_bias) out.push_back(&b);
    }
};

struct InstanceNorm {
    Param gamma, beta;

    void init(const std::string& name, int64_t ch) {
        gamma.name = name + ".gamma";
        gamma.init_shape(1, 1, 1, ch);
        for (float& v : gamma.value.v) v = 1.0f;
        beta.name = name + ".beta";
        beta.init_shape(1, 1, 1, ch);
    }
    int forward(Graph& g, int x) { return g.instance_norm(x, &gamma, &beta); }
    void collect(std::vector<Param*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

// Additive attention over a skip connection: a = sigmoid(psi(relu(Wx*x + Wg*g + b))),
// broadcast over the skip's channels.
struct AttentionGate {
    Conv2d wx, wg, psi;

    void init(Rng& rng, const std::string& name, int64_t skip_ch, int64_t gate_ch,
              int64_t inter_ch) {
        wx.init(rng, name + ".wx", skip_ch, inter_ch, 1, 1, 0, false);
        wg.init(rng, name + ".wg", gate_ch, inter_ch, 1, 1, 0, true);
        psi.init(rng, name + ".psi", inter_ch, 1, 1, 1, 0, true);
    }
    // returns (gated skip, attention map)
    std::pair<int, int> forward(Graph& g, int skip, int gate) {
        int s = g.add(wx.forward(g, skip), wg.forward(g, gate));
        int a = g.sigmoid(psi.forward(g, g.relu(s)));
        return {g.mul_broadcast(skip, a), a};
    }
    void collect(std::vector<Param*>& out) {
        wx.collect(out);
        wg.collect(out);
        psi.collect(out);
    }
};

inline void set_frozen(const std::vector<Param*>& params, bool frozen) {
    for (Param* p : params) p->frozen = frozen;
}

inline void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->zero_grad();
}

inline int64_t param_count(const std::vector<Param*>& params) {
    int64_t n = 0;
    for (Param* p : params) n += p->value.numel();
    return n;
}

}  // namespace mcs
