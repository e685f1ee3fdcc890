#pragma once

#include <utility>
#include <vector>

#include "nn/tensor.hpp"

namespace mcs {

// Pins the BLAS thread count (default 1: results must not depend on thread
// scheduling).
void set_blas_threads(int n);

// Define-by-run autodiff tape. Ops evaluate eagerly; backward() runs a
// reverse sweep accumulating into Param::grad. Parameter gradients are
// skipped for frozen Params at backward time; activation gradients still
// flow through them (how generator gradients pass a frozen discriminator).
class Graph {
public:
    int input(Tensor t);
    int input_like(const Tensor& t) { return input(t); }

    int conv2d(int x, Param* w, Param* b, int stride, int pad);
    int instance_norm(int x, Param* gamma, Param* beta, float eps = 1e-5f);
    int relu(int x);
    int leaky_relu(int x, float slope);
    int sigmoid(int x);
    int upsample_nearest2(int x);
    int avg_pool2(int x);
    int concat(int a, int b);          // channel axis
    int add(int a, int b);
    int mul_broadcast(int x, int gate);  // gate has a single channel
    int detach(int x);                   // gradient barrier

    // scalar-valued losses (mean reductions)
    int mse(int a, int b);
    int mse_to_const(int x, float target);
    int bce_with_logits(int x, float target);
    int weighted_sum(const std::vector<std::pair<int, float>>& terms);

    const Tensor& out(int id) const { return nodes_[static_cast<size_t>(id)].out; }
    float scalar(int id) const;
    bool requires_grad(int id) const {
        return nodes_[static_cast<size_t>(id)].requires_grad;
    }

    void backward(int loss_id);
    void clear();  // drops the tape, keeps scratch allocations
    size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        kInput,
        kConv2d,
        kInstanceNorm,
        kRelu,
        kLeakyRelu,
        kSigmoid,
        kUpsample2,
        kAvgPool2,
        kConcat,
        kAdd,
        kMulBroadcast,
        kDetach,
        kMse,
        kMseToConst,
        kBceWithLogits,
        kWeightedSum,
    };

    struct Node {
        Op op;
        int a = -1, b = -1;
        Param* w = nullptr;
        Param* bias = nullptr;
        int stride = 1, pad = 0;
        float alpha = 0.0f;  // leaky slope or loss target
        Tensor out;
        Tensor grad;
        bool requires_grad = false;
        std::vector<float> saved;  // per-(n,c) mean/inv_std for instance norm
        std::vector<std::pair<int, float>> terms;
    };

    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    int push(Node&& n);
    Tensor& grad_of(int id);
    void check_id(int id) const;

    void conv_forward(Node& n);
    void conv_backward(Node& n);
    void im2col(const float* src, int64_t c, int64_t h, int64_t w, int k, int stride,
                int pad, int64_t oh, int64_t ow, float* col);
    void col2im_add(const float* col, int64_t c, int64_t h, int64_t w, int k, int stride,
                    int pad, int64_t oh, int64_t ow, float* dst);

    std::vector<Node> nodes_;
    std::vector<float> col_;   // im2col scratch, grow-only
    std::vector<float> buf_;   // gemm output scratch, grow-only
};

}  // namespace mcs
