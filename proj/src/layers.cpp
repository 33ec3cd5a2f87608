#include "dprp/layers.hpp"

#include <cmath>
#include <string>

#include "dprp/svd.hpp"

namespace dprp {

void ConvShape::validate() const {
    if (S < 1 || C < 1 || L1 < 1 || L2 < 1)
        throw_error(ErrorKind::config, "conv shape extents must be positive (S=" + std::to_string(S) + ", C=" +
                                           std::to_string(C) + ", L1=" + std::to_string(L1) + ", L2=" +
                                           std::to_string(L2) + ")");
    if (p < 0) throw_error(ErrorKind::config, "conv padding must be non-negative");
    if (s < 1) throw_error(ErrorKind::config, "conv stride must be positive");
}

void FcShape::validate() const {
    if (D1 < 1 || D2 < 1)
        throw_error(ErrorKind::config,
                    "fc shape extents must be positive (D1=" + std::to_string(D1) + ", D2=" + std::to_string(D2) + ")");
}

void LayerSpec::validate() const {
    if (kind == LayerKind::conv)
        conv.validate();
    else
        fc.validate();
}

Tensor reshape_filter(const Tensor& k) {
    if (k.rank() != 4) throw_error(ErrorKind::dimension, "reshape_filter: rank-4 filter required, got " + shape_str(k.shape));
    int S = k.shape[0], C = k.shape[1], L2 = k.shape[2], L1 = k.shape[3];
    Tensor m({S * C, L1 * L2});
    for (int s = 0; s < S; ++s)
        for (int c = 0; c < C; ++c)
            for (int l2 = 0; l2 < L2; ++l2)
                for (int l1 = 0; l1 < L1; ++l1) m(s * C + c, l2 * L1 + l1) = k(s, c, l2, l1);
    return m;
}

Tensor inverse_reshape(const Tensor& m, const ConvShape& shape) {
    shape.validate();
    if (m.rank() != 2 || m.shape[0] != shape.h() || m.shape[1] != shape.w())
        throw_error(ErrorKind::dimension, "inverse_reshape: matrix " + shape_str(m.shape) + " does not factor as SC x L1L2 = " +
                                              std::to_string(shape.h()) + " x " + std::to_string(shape.w()));
    Tensor k({shape.S, shape.C, shape.L2, shape.L1});
    for (int s = 0; s < shape.S; ++s)
        for (int c = 0; c < shape.C; ++c)
            for (int l2 = 0; l2 < shape.L2; ++l2)
                for (int l1 = 0; l1 < shape.L1; ++l1) k(s, c, l2, l1) = m(s * shape.C + c, l2 * shape.L1 + l1);
    return k;
}

namespace {

Tensor draw_dense_matrix(const LayerSpec& spec, Rng& rng) {
    if (spec.kind == LayerKind::conv) {
        const ConvShape& cs = spec.conv;
        double std_dev = std::sqrt(2.0 / (static_cast<double>(cs.C) * cs.L1 * cs.L2));
        Tensor k({cs.S, cs.C, cs.L2, cs.L1});
        for (auto& v : k.data) v = quantize(rng.normal() * std_dev);
        return reshape_filter(k);
    }
    const FcShape& fs = spec.fc;
    double std_dev = std::sqrt(2.0 / static_cast<double>(fs.D1));
    Tensor w({fs.D2, fs.D1});
    for (auto& v : w.data) v = quantize(rng.normal() * std_dev);
    return w;
}

}  // namespace

FactorizedParam init_factorized(const LayerSpec& spec, Rng& rng) {
    spec.validate();
    if (!spec.factorized) throw_error(ErrorKind::usage, "init_factorized: layer is not marked factorized");
    Tensor m = draw_dense_matrix(spec, rng);
    SvdResult decomp = svd(m);
    FactorizedParam param;
    param.h = m.shape[0];
    param.w = m.shape[1];
    param.theta = std::min(param.h, param.w);
    param.r = param.theta;
    param.U = std::move(decomp.U);
    param.sigma = std::move(decomp.sigma);
    param.V = std::move(decomp.V);
    quantize_inplace(param.U);
    quantize_inplace(param.sigma);
    quantize_inplace(param.V);
    if (spec.bias) param.bias = Tensor({spec.bias_len()});
    return param;
}

DenseParam init_dense(const LayerSpec& spec, Rng& rng) {
    spec.validate();
    DenseParam param;
    if (spec.kind == LayerKind::conv) {
        const ConvShape& cs = spec.conv;
        param.weight = inverse_reshape(draw_dense_matrix(spec, rng), cs);
    } else {
        param.weight = draw_dense_matrix(spec, rng);
    }
    if (spec.bias) param.bias = Tensor({spec.bias_len()});
    return param;
}

LayerVars register_params(Tape& tape, const FactorizedParam& param) {
    LayerVars vars;
    vars.U = tape.param(param.U);
    vars.sigma = tape.param(param.sigma);
    vars.V = tape.param(param.V);
    if (param.bias) vars.bias = tape.param(*param.bias);
    return vars;
}

DenseVars register_params(Tape& tape, const DenseParam& param) {
    DenseVars vars;
    vars.weight = tape.param(param.weight);
    if (param.bias) vars.bias = tape.param(*param.bias);
    return vars;
}

Var forward_conv(Tape& tape, const LayerVars& vars, const ConvShape& shape, Var x) {
    Var scaled = tape.col_scale(vars.U, vars.sigma);
    Var m = tape.matmul(scaled, tape.transpose(vars.V));
    // The matricization index map coincides with the row-major layout of the
    // filter, so M reshapes to [S,C,L2,L1] without data movement.
    Var k = tape.reshape(m, {shape.S, shape.C, shape.L2, shape.L1});
    Var y = tape.conv2d(x, k, shape.p, shape.s);
    if (vars.bias) y = tape.bias_add(y, *vars.bias);
    return y;
}

Var forward_fc(Tape& tape, const LayerVars& vars, Var x) {
    Var xv = tape.matmul(x, vars.V);
    Var scaled = tape.col_scale(xv, vars.sigma);
    Var y = tape.matmul(scaled, tape.transpose(vars.U));
    if (vars.bias) y = tape.bias_add(y, *vars.bias);
    return y;
}

Var forward_dense_conv(Tape& tape, const DenseVars& vars, const ConvShape& shape, Var x) {
    Var y = tape.conv2d(x, vars.weight, shape.p, shape.s);
    if (vars.bias) y = tape.bias_add(y, *vars.bias);
    return y;
}

Var forward_dense_fc(Tape& tape, const DenseVars& vars, Var x) {
    Var y = tape.matmul(x, tape.transpose(vars.weight));
    if (vars.bias) y = tape.bias_add(y, *vars.bias);
    return y;
}

}  // namespace dprp
