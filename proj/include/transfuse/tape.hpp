#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "transfuse/tensor.hpp"

namespace transfuse {

// Reverse-mode autodiff over Tensor values. Each op records a closure that
// scatters the output gradient back to its inputs; backward() replays the
// tape from the root in reverse creation order. Tapes are single-use: one
// forward pass, one backward pass.
class Tape {
public:
    using Var = int;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);

    Var matmul(Var a, Var b);
    Var add_row_bias(Var a, Var bias);     // [n,d] + [d]
    Var add_row_cycled(Var a, Var table);  // [n,d] + [s,d]; row r gets table[r % s]

    Var relu(Var a);
    Var gelu(Var a);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

    // Multi-head scaled dot-product attention with softmax restricted to
    // consecutive groups of `group_size` tokens. q/k/v are [N, D].
    Var self_attention(Var q, Var k, Var v, int heads, int group_size);

    // Zero-padded stride-1 convolution; x [Ci,H,W], w [Co,Ci,kh,kw], b [Co].
    Var conv2d(Var x, Var w, Var b, int pad);

    // Valid-region separable filter with a symmetric 1-d kernel; x [H,W].
    Var gauss_valid(Var x, std::shared_ptr<const std::vector<double>> k1d);

    Var reshape(Var a, std::vector<int> s);
    Var concat_channels(Var a, Var b);  // [C1,H,W] ++ [C2,H,W]

    // Scatter per-patch token vectors [N_G, P*P*C] back onto a [C,H,W] grid.
    Var fold_tokens(Var tokens, int channels, int patch, int grid_h, int grid_w);

    Var mean_all(Var a);
    Var sum_all(Var a);
    Var mse_loss(Var a, Var b);          // mean squared difference, scalar
    Var tv_sum(Var r, bool normalize);   // anisotropic TV of a [H,W] residual

    void backward(Var root);

    const Tensor& val(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
    const Tensor& grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].grad; }
    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].requires_grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Debug probe: when set, self_attention appends one [G*heads, gs, gs]
    // tensor of softmax rows per call.
    std::vector<Tensor>* attn_capture = nullptr;

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;
    };

    Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
    Tensor& gmut(Var v) { return nodes_[static_cast<std::size_t>(v)].grad; }

    std::deque<Node> nodes_;
};

}  // namespace transfuse
