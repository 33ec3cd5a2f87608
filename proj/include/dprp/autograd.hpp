#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dprp/tensor.hpp"

namespace dprp {

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
    int id = -1;
};

// Reverse-mode gradient tape. Records one entry per primitive op; backward
// replays entries in strict reverse order of recording. A tape is single-use:
// build one forward graph, call backward once, then discard it.
//
// Every op result is checked for NaN/Inf and rounded to the engine precision
// before it is stored. Node shapes double as the allocation audit used in
// tests: all tensors a forward pass allocates live on the tape.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- leaves ---
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var param(Tensor value) { return leaf(std::move(value), true); }

    // --- elementwise ---
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var relu(Var a);           // max(0, x); subgradient 0 at the kink
    Var abs(Var a);            // |x|; subgradient 0 at 0
    Var funnel(Var a, double delta);  // |x| / (|x| + delta), elementwise

    // --- linear algebra ---
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var col_scale(Var a, Var v);  // a(m x r) * diag(v(r))

    // --- structure ---
    Var reshape(Var a, std::vector<int> shape);
    Var slice1d(Var a, int begin, int end);

    // --- reductions ---
    Var sum(Var a);      // full reduction to a scalar
    Var l2_norm(Var a);  // sqrt(sum of squares) over all entries (Frobenius
                         // norm for matrices); subgradient 0 at 0

    // --- network ops ---
    // x: [C,H,W] or [B,C,H,W]; k: [S,C,L2,L1]. Cross-correlation with zero
    // padding p and stride s on both axes.
    Var conv2d(Var x, Var k, int pad, int stride);
    // x: [B,S,H,W] with b: [S], or x: [B,D] with b: [D].
    Var bias_add(Var x, Var b);
    Var avg_pool2d(Var x, int k);    // non-overlapping k x k mean pooling
    Var global_avg_pool(Var x);      // [B,C,H,W] -> [B,C]
    Var cross_entropy(Var logits, const std::vector<int>& labels);

    void backward(Var loss);

    const Tensor& value(Var v) const { return nodes_[check(v)].value; }
    const Tensor& grad(Var v) const { return nodes_[check(v)].grad; }
    bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

    size_t node_count() const { return nodes_.size(); }
    const std::vector<int>& node_shape(size_t i) const { return nodes_[i].value.shape; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily at backward time
        bool requires_grad = false;
    };
    struct Entry {
        int output = -1;
        std::function<void(Tape&)> back;
    };

    Var leaf(Tensor value, bool requires_grad);
    Var record(Tensor value, bool requires_grad, const char* op, std::function<void(Tape&)> back);
    int check(Var v) const;
    Tensor& grad_buf(int id);

    std::vector<Node> nodes_;
    std::vector<Entry> entries_;
    bool backward_done_ = false;
};

}  // namespace dprp
