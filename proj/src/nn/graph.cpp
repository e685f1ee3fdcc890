#include "nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace mcs {

namespace {

int64_t conv_out_dim(int64_t in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

std::once_flag g_blas_once;

// Deterministic results need a pinned BLAS thread count; default to 1 on
// first use unless the caller chose explicitly.
void ensure_blas_threads() {
    std::call_once(g_blas_once, [] { openblas_set_num_threads(1); });
}

}  // namespace

void set_blas_threads(int n) {
    if (n < 1) throw PipelineError("set_blas_threads: thread count must be >= 1");
    std::call_once(g_blas_once, [] {});
    openblas_set_num_threads(n);
}

void Graph::check_id(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
        throw PipelineError("graph: invalid node id " + std::to_string(id));
    }
}

int Graph::push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
}

Tensor& Graph::grad_of(int id) {
    Node& n = node(id);
    if (n.grad.numel() == 0) {
        n.grad = Tensor(n.out.n, n.out.c, n.out.h, n.out.w);
    }
    return n.grad;
}

float Graph::scalar(int id) const {
    check_id(id);
    const Tensor& t = node(id).out;
    if (t.numel() != 1) throw PipelineError("graph: node is not a scalar");
    return t.v[0];
}

void Graph::clear() { nodes_.clear(); }

int Graph::input(Tensor t) {
    Node n;
    n.op = Op::kInput;
    n.out = std::move(t);
    n.requires_grad = false;
    return push(std::move(n));
}

int Graph::conv2d(int x, Param* w, Param* b, int stride, int pad) {
    check_id(x);
    const Tensor& in = node(x).out;
    if (w->value.c != in.c) {
        throw ValidationError("conv2d: weight expects " + std::to_string(w->value.c) +
                              " input channels, got " + in.shape_str());
    }
    int k = static_cast<int>(w->value.h);
    int64_t oh = conv_out_dim(in.h, k, stride, pad);
    int64_t ow = conv_out_dim(in.w, k, stride, pad);
    if (oh < 1 || ow < 1) {
        throw ValidationError("conv2d: input " + in.shape_str() + " smaller than kernel");
    }
    Node n;
    n.op = Op::kConv2d;
    n.a = x;
    n.w = w;
    n.bias = b;
    n.stride = stride;
    n.pad = pad;
    n.out = Tensor(in.n, w->value.n, oh, ow);
    n.requires_grad = node(x).requires_grad || !w->frozen;
    conv_forward(n);
    return push(std::move(n));
}

void Graph::im2col(const float* src, int64_t c, int64_t h, int64_t w, int k, int stride,
                   int pad, int64_t oh, int64_t ow, float* col) {
    const int64_t cols = oh * ow;
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                float* dst = col + ((ci * k + ki) * k + kj) * cols;
                for (int64_t oy = 0; oy < oh; ++oy) {
                    int64_t iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst + oy * ow, dst + (oy + 1) * ow, 0.0f);
                        continue;
                    }
                    const float* srow = src + (ci * h + iy) * w;
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        int64_t ix = ox * stride - pad + kj;
                        dst[oy * ow + ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void Graph::col2im_add(const float* col, int64_t c, int64_t h, int64_t w, int k, int stride,
                       int pad, int64_t oh, int64_t ow, float* dst) {
    const int64_t cols = oh * ow;
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const float* src = col + ((ci * k + ki) * k + kj) * cols;
                for (int64_t oy = 0; oy < oh; ++oy) {
                    int64_t iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    float* drow = dst + (ci * h + iy) * w;
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        int64_t ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < w) drow[ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

void Graph::conv_forward(Node& n) {
    ensure_blas_threads();
    const Tensor& in = node(n.a).out;
    const int k = static_cast<int>(n.w->value.h);
    const int64_t oc = n.w->value.n, ic = in.c;
    const int64_t oh = n.out.h, ow = n.out.w;
    const int64_t ckk = ic * k * k, cols = oh * ow;
    col_.resize(static_cast<size_t>(std::max<int64_t>(ckk * cols, 1)));
    for (int64_t ni = 0; ni < in.n; ++ni) {
        im2col(in.at(ni, 0), ic, in.h, in.w, k, n.stride, n.pad, oh, ow, col_.data());
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans,
                    static_cast<int>(oc), static_cast<int>(cols), static_cast<int>(ckk),
                    1.0f, n.w->value.v.data(), static_cast<int>(ckk),
                    col_.data(), static_cast<int>(cols),
                    0.0f, n.out.at(ni, 0), static_cast<int>(cols));
        if (n.bias) {
            for (int64_t c = 0; c < oc; ++c) {
                float bv = n.bias->value.v[static_cast<size_t>(c)];
                float* o = n.out.at(ni, c);
                for (int64_t i = 0; i < cols; ++i) o[i] += bv;
            }
        }
    }
}

void Graph::conv_backward(Node& n) {
    Node& src = node(n.a);
    const Tensor& in = src.out;
    const int k = static_cast<int>(n.w->value.h);
    const int64_t oc = n.w->value.n, ic = in.c;
    const int64_t oh = n.out.h, ow = n.out.w;
    const int64_t ckk = ic * k * k, cols = oh * ow;
    const bool need_dw = !n.w->frozen;
    const bool need_dx = src.requires_grad;
    if (!need_dw && !need_dx) return;

    col_.resize(static_cast<size_t>(std::max<int64_t>(ckk * cols, 1)));
    if (need_dx) buf_.resize(static_cast<size_t>(std::max<int64_t>(ckk * cols, 1)));
    Tensor* dx = need_dx ? &grad_of(n.a) : nullptr;

    for (int64_t ni = 0; ni < in.n; ++ni) {
        const float* dy = n.grad.at(ni, 0);
        if (need_dw) {
            // im2col is recomputed rather than cached across the tape; at
            // these sizes the gemm dominates and memory stays flat.
            im2col(in.at(ni, 0), ic, in.h, in.w, k, n.stride, n.pad, oh, ow, col_.data());
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans,
                        static_cast<int>(oc), static_cast<int>(ckk), static_cast<int>(cols),
                        1.0f, dy, static_cast<int>(cols),
                        col_.data(), static_cast<int>(cols),
                        1.0f, n.w->grad.v.data(), static_cast<int>(ckk));
            if (n.bias) {
                for (int64_t c = 0; c < oc; ++c) {
                    const float* g = n.grad.at(ni, c);
                    float acc = 0.0f;
                    for (int64_t i = 0; i < cols; ++i) acc += g[i];
                    n.bias->grad.v[static_cast<size_t>(c)] += acc;
                }
            }
        }
        if (need_dx) {
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans,
                        static_cast<int>(ckk), static_cast<int>(cols), static_cast<int>(oc),
                        1.0f, n.w->value.v.data(), static_cast<int>(ckk),
                        dy, static_cast<int>(cols),
                        0.0f, buf_.data(), static_cast<int>(cols));
            col2im_add(buf_.data(), ic, in.h, in.w, k, n.stride, n.pad, oh, ow, dx->at(ni, 0));
        }
    }
}

int Graph::instance_norm(int x, Param* gamma, Param* beta, float eps) {
    check_id(x);
    const Tensor& in = node(x).out;
    if (gamma->value.numel() != in.c || beta->value.numel() != in.c) {
        throw ValidationError("instance_norm: affine size mismatch for input " + in.shape_str());
    }
    Node n;
    n.op = Op::kInstanceNorm;
    n.a = x;
    n.w = gamma;
    n.bias = beta;
    n.alpha = eps;
    n.out = Tensor(in.n, in.c, in.h, in.w);
    n.requires_grad = node(x).requires_grad || !gamma->frozen;
    n.saved.resize(static_cast<size_t>(2 * in.n * in.c));
    const int64_t hw = in.h * in.w;
    for (int64_t ni = 0; ni < in.n; ++ni) {
        for (int64_t ci = 0; ci < in.c; ++ci) {
            const float* src = in.at(ni, ci);
            double mean = 0.0;
            for (int64_t i = 0; i < hw; ++i) mean += src[i];
            mean /= static_cast<double>(hw);
            double var = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                double d = src[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(hw);
            float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps));
            float mu = static_cast<float>(mean);
            float g = gamma->value.v[static_cast<size_t>(ci)];
            float b = beta->value.v[static_cast<size_t>(ci)];
            float* dst = n.out.at(ni, ci);
            for (int64_t i = 0; i < hw; ++i) {
                dst[i] = g * (src[i] - mu) * inv_std + b;
            }
            n.saved[static_cast<size_t>(2 * (ni * in.c + ci))] = mu;
            n.saved[static_cast<size_t>(2 * (ni * in.c + ci) + 1)] = inv_std;
        }
    }
    return push(std::move(n));
}

int Graph::relu(int x) {
    check_id(x);
    Node n;
    n.op = Op::kRelu;
    n.a = x;
    n.out = node(x).out;
    n.requires_grad = node(x).requires_grad;
    for (float& v : n.out.v) v = v > 0.0f ? v : 0.0f;
    return push(std::move(n));
}

int Graph::leaky_relu(int x, float slope) {
    check_id(x);
    Node n;
    n.op = Op::kLeakyRelu;
    n.a = x;
    n.alpha = slope;
    n.out = node(x).out;
    n.requires_grad = node(x).requires_grad;
    for (float& v : n.out.v) v = v > 0.0f ? v : slope * v;
    return push(std::move(n));
}

int Graph::sigmoid(int x) {
    check_id(x);
    Node n;
    n.op = Op::kSigmoid;
    n.a = x;
    n.out = node(x).out;
    n.requires_grad = node(x).requires_grad;
    for (float& v : n.out.v) v = 1.0f / (1.0f + std::exp(-v));
    return push(std::move(n));
}

int Graph::upsample_nearest2(int x) {
    check_id(x);
    const Tensor& in = node(x).out;
    Node n;
    n.op = Op::kUpsample2;
    n.a = x;
    n.out = Tensor(in.n, in.c, in.h * 2, in.w * 2);
    n.requires_grad = node(x).requires_grad;
    for (int64_t ni = 0; ni < in.n; ++ni) {
        for (int64_t ci = 0; ci < in.c; ++ci) {
            const float* src = in.at(ni, ci);
            float* dst = n.out.at(ni, ci);
            for (int64_t y = 0; y < in.h; ++y) {
                for (int64_t xx = 0; xx < in.w; ++xx) {
                    float v = src[y * in.w + xx];
                    float* d = dst + (2 * y) * (2 * in.w) + 2 * xx;
                    d[0] = v;
                    d[1] = v;
                    d[2 * in.w] = v;
                    d[2 * in.w + 1] = v;
                }
            }
        }
    }
    return push(std::move(n));
}

int Graph::avg_pool2(int x) {
    check_id(x);
    const Tensor& in = node(x).out;
    if (in.h % 2 != 0 || in.w % 2 != 0) {
        throw ValidationError("avg_pool2: input " + in.shape_str() + " must have even H/W");
    }
    Node n;
    n.op = Op::kAvgPool2;
    n.a = x;
    n.out = Tensor(in.n, in.c, in.h / 2, in.w / 2);
    n.requires_grad = node(x).requires_grad;
    for (int64_t ni = 0; ni < in.n; ++ni) {
        for (int64_t ci = 0; ci < in.c; ++ci) {
            const float* src = in.at(ni, ci);
            float* dst = n.out.at(ni, ci);
            for (int64_t y = 0; y < n.out.h; ++y) {
                for (int64_t xx = 0; xx < n.out.w; ++xx) {
                    const float* s = src + (2 * y) * in.w + 2 * xx;
                    dst[y * n.out.w + xx] =
                        0.25f * (s[0] + s[1] + s[in.w] + s[in.w + 1]);
                }
            }
        }
    }
    return push(std::move(n));
}

int Graph::concat(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = node(a).out;
    const Tensor& tb = node(b).out;
    if (ta.n != tb.n || ta.h != tb.h || ta.w != tb.w) {
        throw ValidationError("concat: spatial mismatch " + ta.shape_str() + " vs " +
                              tb.shape_str());
    }
    Node n;
    n.op = Op::kConcat;
    n.a = a;
    n.b = b;
    n.out = Tensor(ta.n, ta.c + tb.c, ta.h, ta.w);
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    for (int64_t ni = 0; ni < ta.n; ++ni) {
        std::copy(ta.at(ni, 0), ta.at(ni, 0) + ta.c * ta.h * ta.w, n.out.at(ni, 0));
        std::copy(tb.at(ni, 0), tb.at(ni, 0) + tb.c * tb.h * tb.w, n.out.at(ni, ta.c));
    }
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = node(a).out;
    const Tensor& tb = node(b).out;
    if (!ta.same_shape(tb)) {
        throw ValidationError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Node n;
    n.op = Op::kAdd;
    n.a = a;
    n.b = b;
    n.out = ta;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    for (size_t i = 0; i < n.out.v.size(); ++i) n.out.v[i] += tb.v[i];
    return push(std::move(n));
}

int Graph::mul_broadcast(int x, int gate) {
    check_id(x);
    check_id(gate);
    const Tensor& tx = node(x).out;
    const Tensor& tg = node(gate).out;
    if (tg.c != 1 || tg.n != tx.n || tg.h != tx.h || tg.w != tx.w) {
        throw ValidationError("mul_broadcast: gate " + tg.shape_str() +
                              " incompatible with " + tx.shape_str());
    }
    Node n;
    n.op = Op::kMulBroadcast;
    n.a = x;
    n.b = gate;
    n.out = Tensor(tx.n, tx.c, tx.h, tx.w);
    n.requires_grad = node(x).requires_grad || node(gate).requires_grad;
    const int64_t hw = tx.h * tx.w;
    for (int64_t ni = 0; ni < tx.n; ++ni) {
        const float* g = tg.at(ni, 0);
        for (int64_t ci = 0; ci < tx.c; ++ci) {
            const float* src = tx.at(ni, ci);
            float* dst = n.out.at(ni, ci);
            for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * g[i];
        }
    }
    return push(std::move(n));
}

int Graph::detach(int x) {
    check_id(x);
    Node n;
    n.op = Op::kDetach;
    n.a = x;
    n.out = node(x).out;
    n.requires_grad = false;
    return push(std::move(n));
}

int Graph::mse(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = node(a).out;
    const Tensor& tb = node(b).out;
    if (!ta.same_shape(tb)) {
        throw ValidationError("mse: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Node n;
    n.op = Op::kMse;
    n.a = a;
    n.b = b;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    double acc = 0.0;
    for (size_t i = 0; i < ta.v.size(); ++i) {
        double d = static_cast<double>(ta.v[i]) - tb.v[i];
        acc += d * d;
    }
    n.out = Tensor(1, 1, 1, 1);
    n.out.v[0] = static_cast<float>(acc / static_cast<double>(ta.numel()));
    return push(std::move(n));
}

int Graph::mse_to_const(int x, float target) {
    check_id(x);
    Node n;
    n.op = Op::kMseToConst;
    n.a = x;
    n.alpha = target;
    n.requires_grad = node(x).requires_grad;
    const Tensor& t = node(x).out;
    double acc = 0.0;
    for (float v : t.v) {
        double d = static_cast<double>(v) - target;
        acc += d * d;
    }
    n.out = Tensor(1, 1, 1, 1);
    n.out.v[0] = static_cast<float>(acc / static_cast<double>(t.numel()));
    return push(std::move(n));
}

int Graph::bce_with_logits(int x, float target) {
    check_id(x);
    Node n;
    n.op = Op::kBceWithLogits;
    n.a = x;
    n.alpha = target;
    n.requires_grad = node(x).requires_grad;
    const Tensor& t = node(x).out;
    double acc = 0.0;
    for (float z : t.v) {
        double zd = z;
        acc += std::max(zd, 0.0) - zd * target + std::log1p(std::exp(-std::abs(zd)));
    }
    n.out = Tensor(1, 1, 1, 1);
    n.out.v[0] = static_cast<float>(acc / static_cast<double>(t.numel()));
    return push(std::move(n));
}

int Graph::weighted_sum(const std::vector<std::pair<int, float>>& terms) {
    Node n;
    n.op = Op::kWeightedSum;
    n.terms = terms;
    double acc = 0.0;
    for (const auto& [id, wgt] : terms) {
        check_id(id);
        if (node(id).out.numel() != 1) {
            throw ValidationError("weighted_sum: term " + std::to_string(id) + " is not scalar");
        }
        acc += static_cast<double>(wgt) * node(id).out.v[0];
        n.requires_grad = n.requires_grad || node(id).requires_grad;
    }
    n.out = Tensor(1, 1, 1, 1);
    n.out.v[0] = static_cast<float>(acc);
    return push(std::move(n));
}

void Graph::backward(int loss_id) {
    check_id(loss_id);
    if (node(loss_id).out.numel() != 1) {
        throw PipelineError("backward: loss node must be scalar");
    }
    if (!node(loss_id).requires_grad) return;
    grad_of(loss_id).v[0] = 1.0f;

    for (int id = loss_id; id >= 0; --id) {
        Node& n = node(id);
        if (!n.requires_grad || n.grad.numel() == 0) continue;
        switch (n.op) {
            case Op::kInput:
            case Op::kDetach:
                break;
            case Op::kConv2d:
                conv_backward(n);
                break;
            case Op::kInstanceNorm: {
                Node& src = node(n.a);
                const Tensor& in = src.out;
                const int64_t hw = in.h * in.w;
                const bool need_dx = src.requires_grad;
                const bool need_dw = !n.w->frozen;
                Tensor* dx = need_dx ? &grad_of(n.a) : nullptr;
                for (int64_t ni = 0; ni < in.n; ++ni) {
                    for (int64_t ci = 0; ci < in.c; ++ci) {
                        float mu = n.saved[static_cast<size_t>(2 * (ni * in.c + ci))];
                        float inv_std = n.saved[static_cast<size_t>(2 * (ni * in.c + ci) + 1)];
                        float g = n.w->value.v[static_cast<size_t>(ci)];
                        const float* x = in.at(ni, ci);
                        const float* dy = n.grad.at(ni, ci);
                        double sum_dy = 0.0, sum_dy_xh = 0.0;
                        for (int64_t i = 0; i < hw; ++i) {
                            double xh = (x[i] - mu) * inv_std;
                            sum_dy += dy[i];
                            sum_dy_xh += dy[i] * xh;
                        }
                        if (need_dw) {
                            n.w->grad.v[static_cast<size_t>(ci)] +=
                                static_cast<float>(sum_dy_xh);
                            n.bias->grad.v[static_cast<size_t>(ci)] +=
                                static_cast<float>(sum_dy);
                        }
                        if (need_dx) {
                            float* d = dx->at(ni, ci);
                            float m_dy = static_cast<float>(sum_dy / static_cast<double>(hw));
                            float m_dyxh =
                                static_cast<float>(sum_dy_xh / static_cast<double>(hw));
                            for (int64_t i = 0; i < hw; ++i) {
                                float xh = (x[i] - mu) * inv_std;
                                d[i] += g * inv_std * (dy[i] - m_dy - xh * m_dyxh);
                            }
                        }
                    }
                }
                break;
            }
            case Op::kRelu: {
                if (!node(n.a).requires_grad) break;
                Tensor& dx = grad_of(n.a);
                const Tensor& in = node(n.a).out;
                for (size_t i = 0; i < in.v.size(); ++i) {
                    if (in.v[i] > 0.0f) dx.v[i] += n.grad.v[i];
                }
                break;
            }
            case Op::kLeakyRelu: {
                if (!node(n.a).requires_grad) break;
                Tensor& dx = grad_of(n.a);
                const Tensor& in = node(n.a).out;
                for (size_t i = 0; i < in.v.size(); ++i) {
                    dx.v[i] += n.grad.v[i] * (in.v[i] > 0.0f ? 1.0f : n.alpha);
                }
                break;
            }
            case Op::kSigmoid: {
                if (!node(n.a).requires_grad) break;
                Tensor& dx = grad_of(n.a);
                for (size_t i = 0; i < n.out.v.size(); ++i) {
                    float s = n.out.v[i];
                    dx.v[i] += n.grad.v[i] * s * (1.0f - s);
                }
                break;
            }
            case Op::kUpsample2: {
                if (!node(n.a).requires_grad) break;
                Tensor& dx = grad_of(n.a);
                const Tensor& in = node(n.a).out;
                for (int64_t ni = 0; ni < in.n; ++ni) {
                    for (int64_t ci = 0; ci < in.c; ++ci) {
                        const float* gy = n.grad.at(ni, ci);
                        float* d = dx.at(ni, ci);
                        for (int64_t y = 0; y < in.h; ++y) {
                            for (int64_t xx = 0; xx < in.w; ++xx) {
                                const float* g = gy + (2 * y) * (2 * in.w) + 2 * xx;
                                d[y * in.w + xx] +=
                                    g[0] + g[1] + g[2 * in.w] + g[2 * in.w + 1];
                            }
                        }
                    }
                }
                break;
            }
            case Op::kAvgPool2: {
                if (!node(n.a).requires_grad) break;
                Tensor& dx = grad_of(n.a);
                const Tensor& in = node(n.a).out;
                for (int64_t ni = 0; ni < in.n; ++ni) {
                    for (int64_t ci = 0; ci < in.c; ++ci) {
                        const float* gy = n.grad.at(ni, ci);
                        float* d = dx.at(ni, ci);
                        for (int64_t y = 0; y < n.out.h; ++y) {
                            for (int64_t xx = 0; xx < n.out.w; ++xx) {
                                float g = 0.25f * gy[y * n.out.w + xx];
                                float* s = d + (2 * y) * in.w + 2 * xx;
                                s[0] += g;
                                s[1] += g;
                                s[in.w] += g;
                                s[in.w + 1] += g;
                            }
                        }
                    }
                }
                break;
            }
            case Op::kConcat: {
                const Tensor& ta = node(n.a).out;
                const Tensor& tb = node(n.b).out;
                if (node(n.a).requires_grad) {
                    Tensor& da = grad_of(n.a);
                    for (int64_t ni = 0; ni < ta.n; ++ni) {
                        const float* g = n.grad.at(ni, 0);
                        float* d = da.at(ni, 0);
                        int64_t cnt = ta.c * ta.h * ta.w;
                        for (int64_t i = 0; i < cnt; ++i) d[i] += g[i];
                    }
                }
                if (node(n.b).requires_grad) {
                    Tensor& db = grad_of(n.b);
                    for (int64_t ni = 0; ni < tb.n; ++ni) {
                        const float* g = n.grad.at(ni, ta.c);
                        float* d = db.at(ni, 0);
                        int64_t cnt = tb.c * tb.h * tb.w;
                        for (int64_t i = 0; i < cnt; ++i) d[i] += g[i];
                    }
                }
                break;
            }
            case Op::kAdd: {
                if (node(n.a).requires_grad) {
                    Tensor& da = grad_of(n.a);
                    for (size_t i = 0; i < da.v.size(); ++i) da.v[i] += n.grad.v[i];
                }
                if (node(n.b).requires_grad) {
                    Tensor& db = grad_of(n.b);
                    for (size_t i = 0; i < db.v.size(); ++i) db.v[i] += n.grad.v[i];
                }
                break;
            }
            case Op::kMulBroadcast: {
                const Tensor& tx = node(n.a).out;
                const Tensor& tg = node(n.b).out;
                const int64_t hw = tx.h * tx.w;
                if (node(n.a).requires_grad) {
                    Tensor& dx = grad_of(n.a);
                    for (int64_t ni = 0; ni < tx.n; ++ni) {
                        const float* g = tg.at(ni, 0);
                        for (int64_t ci = 0; ci < tx.c; ++ci) {
                            const float* gy = n.grad.at(ni, ci);
                            float* d = dx.at(ni, ci);
                            for (int64_t i = 0; i < hw; ++i) d[i] += gy[i] * g[i];
                        }
                    }
                }
                if (node(n.b).requires_grad) {
                    Tensor& dg = grad_of(n.b);
                    for (int64_t ni = 0; ni < tx.n; ++ni) {
                        float* d = dg.at(ni, 0);
                        for (int64_t ci = 0; ci < tx.c; ++ci) {
                            const float* gy = n.grad.at(ni, ci);
                            const float* x = tx.at(ni, ci);
                            for (int64_t i = 0; i < hw; ++i) d[i] += gy[i] * x[i];
                        }
                    }
                }
                break;
            }
            case Op::kMse: {
                const Tensor& ta = node(n.a).out;
                const Tensor& tb = node(n.b).out;
                float scale = 2.0f * n.grad.v[0] / static_cast<float>(ta.numel());
                if (node(n.a).requires_grad) {
                    Tensor& da = grad_of(n.a);
                    for (size_t i = 0; i < ta.v.size(); ++i) {
                        da.v[i] += scale * (ta.v[i] - tb.v[i]);
                    }
                }
                if (node(n.b).requires_grad) {
                    Tensor& db = grad_of(n.b);
                    for (size_t i = 0; i < ta.v.size(); ++i) {
                        db.v[i] -= scale * (ta.v[i] - tb.v[i]);
                    }
                }
                break;
            }
            case Op::kMseToConst: {
                if (!node(n.a).requires_grad) break;
                const Tensor& ta = node(n.a).out;
                Tensor& da = grad_of(n.a);
                float scale = 2.0f * n.grad.v[0] / static_cast<float>(ta.numel());
                for (size_t i = 0; i < ta.v.size(); ++i) {
                    da.v[i] += scale * (ta.v[i] - n.alpha);
                }
                break;
            }
            case Op::kBceWithLogits: {
                if (!node(n.a).requires_grad) break;
                const Tensor& ta = node(n.a).out;
                Tensor& da = grad_of(n.a);
                float scale = n.grad.v[0] / static_cast<float>(ta.numel());
                for (size_t i = 0; i < ta.v.size(); ++i) {
                    float s = 1.0f / (1.0f + std::exp(-ta.v[i]));
                    da.v[i] += scale * (s - n.alpha);
                }
                break;
            }
            case Op::kWeightedSum: {
                for (const auto& [tid, wgt] : n.terms) {
                    if (!node(tid).requires_grad) continue;
                    grad_of(tid).v[0] += wgt * n.grad.v[0];
                }
                break;
            }
        }
    }
}

}  // namespace mcs
