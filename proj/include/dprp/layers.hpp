#pragma once

#include <optional>

#include "dprp/autograd.hpp"
#include "dprp/rng.hpp"
#include "dprp/tensor.hpp"

namespace dprp {

struct ConvShape {
    int S = 0;   // output channels
    int C = 0;   // input channels
    int L1 = 0;  // kernel width
    int L2 = 0;  // kernel height
    int p = 0;   // padding
    int s = 1;   // stride

    void validate() const;
    int h() const { return S * C; }
    int w() const { return L1 * L2; }
};

struct FcShape {
    int D1 = 0;  // input width
    int D2 = 0;  // output width

    void validate() const;
    int h() const { return D2; }
    int w() const { return D1; }
};

enum class LayerKind { conv, fc };

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    ConvShape conv;
    FcShape fc;
    bool factorized = true;
    bool relu = false;
    bool bias = true;

    void validate() const;
    int matricized_h() const { return kind == LayerKind::conv ? conv.h() : fc.h(); }
    int matricized_w() const { return kind == LayerKind::conv ? conv.w() : fc.w(); }
    // bias is one value per output channel (conv: S, fc: D2)
    int bias_len() const { return kind == LayerKind::conv ? conv.S : fc.D2; }
};

// Trainable SVD triple for one layer. U is h x r, V is w x r, sigma length r.
struct FactorizedParam {
    Tensor U;
    Tensor sigma;
    Tensor V;
    int r = 0;
    int h = 0;
    int w = 0;
    int theta = 0;  // rank at initialization, min(h, w)
    std::optional<Tensor> bias;

    long long trainable_count() const {
        long long n = static_cast<long long>(r) * (h + w + 1);
        if (bias) n += bias->numel();
        return n;
    }
};

// Dense (unfactorized) layer parameter: conv weight [S,C,L2,L1] or fc weight
// [D2,D1].
struct DenseParam {
    Tensor weight;
    std::optional<Tensor> bias;

    long long trainable_count() const {
        long long n = weight.numel();
        if (bias) n += bias->numel();
        return n;
    }
};

// Matricization [M]_{i,j} = [K]_{s,c,l2,l1} with i = s*C + c and
// j = l2*L1 + l1 (0-based indices).
Tensor reshape_filter(const Tensor& k);
Tensor inverse_reshape(const Tensor& m, const ConvShape& shape);

FactorizedParam init_factorized(const LayerSpec& spec, Rng& rng);
DenseParam init_dense(const LayerSpec& spec, Rng& rng);

// Tape handles of one layer's trainable tensors.
struct LayerVars {
    Var U;
    Var sigma;
    Var V;
    std::optional<Var> bias;
};

struct DenseVars {
    Var weight;
    std::optional<Var> bias;
};

LayerVars register_params(Tape& tape, const FactorizedParam& param);
DenseVars register_params(Tape& tape, const DenseParam& param);

// Reconstructs M = U diag(sigma) V^T on the tape, reshapes it to the filter
// and convolves. x: [C,H,W] or [B,C,H,W].
Var forward_conv(Tape& tape, const LayerVars& vars, const ConvShape& shape, Var x);
// y = x V diag(sigma) U^T (+ bias) as three thin matmuls; never materializes
// the h x w dense weight. x: [B,D1].
Var forward_fc(Tape& tape, const LayerVars& vars, Var x);

Var forward_dense_conv(Tape& tape, const DenseVars& vars, const ConvShape& shape, Var x);
Var forward_dense_fc(Tape& tape, const DenseVars& vars, Var x);

}  // namespace dprp
