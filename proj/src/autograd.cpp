#include "dprp/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace dprp {

namespace {

// Valid output-index range for one kernel offset: all o with
// 0 <= o*stride - pad + l < in_extent.
struct SpanRange {
    int begin;
    int end;  // exclusive
};

SpanRange valid_span(int out_extent, int in_extent, int pad, int stride, int l) {
    int lo = 0;
    int shift = pad - l;
    if (shift > 0) lo = (shift + stride - 1) / stride;
    int hi_num = in_extent - 1 + pad - l;
    int hi = hi_num >= 0 ? hi_num / stride : -1;
    hi = std::min(hi, out_extent - 1);
    if (hi + 1 < lo) return {0, 0};
    return {lo, hi + 1};
}

int conv_out_extent(int in, int l, int pad, int stride, const char* axis) {
    int span = in - l + 2 * pad;
    if (span < 0 || span % stride != 0)
        throw_error(ErrorKind::config, std::string("conv2d: non-integral output extent along ") + axis + " (in=" +
                                           std::to_string(in) + ", kernel=" + std::to_string(l) + ", pad=" +
                                           std::to_string(pad) + ", stride=" + std::to_string(stride) + ")");
    return span / stride + 1;
}

}  // namespace

int Tape::check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw_error(ErrorKind::usage, "invalid tape variable");
    return v.id;
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    ensure_finite(value, requires_grad ? "param" : "constant");
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, bool requires_grad, const char* op, std::function<void(Tape&)> back) {
    ensure_finite(value, op);
    quantize_inplace(value);
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad});
    int id = static_cast<int>(nodes_.size()) - 1;
    if (requires_grad && back) entries_.push_back(Entry{id, std::move(back)});
    return Var{id};
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
        throw_error(ErrorKind::dimension, "add: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor out(ta.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = record(std::move(out), rg, "add", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, b, o](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     if (t.requires_grad(a)) {
                                         Tensor& ga = t.grad_buf(a.id);
                                         for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
                                     }
                                     if (t.requires_grad(b)) {
                                         Tensor& gb = t.grad_buf(b.id);
                                         for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
                                     }
                                 }});
    return o;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
        throw_error(ErrorKind::dimension, "sub: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor out(ta.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] - tb.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = record(std::move(out), rg, "sub", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, b, o](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     if (t.requires_grad(a)) {
                                         Tensor& ga = t.grad_buf(a.id);
                                         for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
                                     }
                                     if (t.requires_grad(b)) {
                                         Tensor& gb = t.grad_buf(b.id);
                                         for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
                                     }
                                 }});
    return o;
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
        throw_error(ErrorKind::dimension, "mul: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor out(ta.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = record(std::move(out), rg, "mul", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, b, o](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     const Tensor& va = t.nodes_[a.id].value;
                                     const Tensor& vb = t.nodes_[b.id].value;
                                     if (t.requires_grad(a)) {
                                         Tensor& ga = t.grad_buf(a.id);
                                         for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
                                     }
                                     if (t.requires_grad(b)) {
                                         Tensor& gb = t.grad_buf(b.id);
                                         for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
                                     }
                                 }});
    return o;
}

Var Tape::scale(Var a, double c) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = c * ta.data[i];
    bool rg = requires_grad(a);
    Var o = record(std::move(out), rg, "scale", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, c, o](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     Tensor& ga = t.grad_buf(a.id);
                                     for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
                                 }});
    return o;
}

Var Tape::relu(Var a) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] > 0.0 ? ta.data[i] : 0.0;
    bool rg = requires_grad(a);
    Var o = record(std::move(out), rg, "relu", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, o](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     const Tensor& va = t.nodes_[a.id].value;
                                     Tensor& ga = t.grad_buf(a.id);
                                     for (size_t i = 0; i < g.data.size(); ++i)
                                         if (va.data[i] > 0.0) ga.data[i] += g.data[i];
                                 }});
    return o;
}

Var Tape::abs(Var a) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::fabs(ta.data[i]);
    bool rg = requires_grad(a);
    Var o = record(std::move(out), rg, "abs", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, o](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     const Tensor& va = t.nodes_[a.id].value;
                                     Tensor& ga = t.grad_buf(a.id);
                                     for (size_t i = 0; i < g.data.size(); ++i) {
                                         if (va.data[i] > 0.0)
                                             ga.data[i] += g.data[i];
                                         else if (va.data[i] < 0.0)
                                             ga.data[i] -= g.data[i];
                                     }
                                 }});
    return o;
}

Var Tape::funnel(Var a, double delta) {
    if (delta <= 0.0) throw_error(ErrorKind::config, "funnel: delta must be positive");
    const Tensor& ta = value(a);
    Tensor out(ta.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        double m = std::fabs(ta.data[i]);
        out.data[i] = m / (m + delta);
    }
    bool rg = requires_grad(a);
    Var o = record(std::move(out), rg, "funnel", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, delta, o](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     const Tensor& va = t.nodes_[a.id].value;
                                     Tensor& ga = t.grad_buf(a.id);
                                     for (size_t i = 0; i < g.data.size(); ++i) {
                                         double x = va.data[i];
                                         if (x == 0.0) continue;
                                         double m = std::fabs(x) + delta;
                                         double d = delta / (m * m);
                                         ga.data[i] += g.data[i] * (x > 0.0 ? d : -d);
                                     }
                                 }});
    return o;
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0])
        throw_error(ErrorKind::dimension,
                    "matmul: incompatible shapes " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = &ta.data[static_cast<size_t>(i) * k];
        double* orow = &out.data[static_cast<size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = &tb.data[static_cast<size_t>(p) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = record(std::move(out), rg, "matmul", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, b, o, m, k, n](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     const Tensor& va = t.nodes_[a.id].value;
                                     const Tensor& vb = t.nodes_[b.id].value;
                                     if (t.requires_grad(a)) {
                                         // dA = G * B^T
                                         Tensor& ga = t.grad_buf(a.id);
                                         for (int i = 0; i < m; ++i) {
                                             const double* grow = &g.data[static_cast<size_t>(i) * n];
                                             double* garow = &ga.data[static_cast<size_t>(i) * k];
                                             for (int p = 0; p < k; ++p)
                                                 garow[p] += dot(grow, &vb.data[static_cast<size_t>(p) * n], n);
                                         }
                                     }
                                     if (t.requires_grad(b)) {
                                         // dB = A^T * G
                                         Tensor& gb = t.grad_buf(b.id);
                                         for (int i = 0; i < m; ++i) {
                                             const double* arow = &va.data[static_cast<size_t>(i) * k];
                                             const double* grow = &g.data[static_cast<size_t>(i) * n];
                                             for (int p = 0; p < k; ++p) {
                                                 double av = arow[p];
                                                 double* gbrow = &gb.data[static_cast<size_t>(p) * n];
                                                 for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                                             }
                                         }
                                     }
                                 }});
    return o;
}

Var Tape::transpose(Var a) {
    const Tensor& ta = value(a);
    if (ta.rank() != 2) throw_error(ErrorKind::dimension, "transpose: rank-2 tensor required, got " + shape_str(ta.shape));
    int m = ta.shape[0], n = ta.shape[1];
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out(j, i) = ta(i, j);
    bool rg = requires_grad(a);
    Var o = record(std::move(out), rg, "transpose", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, o, m, n](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     Tensor& ga = t.grad_buf(a.id);
                                     for (int j = 0; j < n; ++j)
                                         for (int i = 0; i < m; ++i)
                                             ga.data[static_cast<size_t>(i) * n + j] += g.data[static_cast<size_t>(j) * m + i];
                                 }});
    return o;
}

Var Tape::col_scale(Var a, Var v) {
    const Tensor& ta = value(a);
    const Tensor& tv = value(v);
    if (ta.rank() != 2 || tv.rank() != 1 || ta.shape[1] != tv.shape[0])
        throw_error(ErrorKind::dimension,
                    "col_scale: incompatible shapes " + shape_str(ta.shape) + " vs " + shape_str(tv.shape));
    int m = ta.shape[0], r = ta.shape[1];
    Tensor out({m, r});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < r; ++j) out(i, j) = ta(i, j) * tv.data[static_cast<size_t>(j)];
    bool rg = requires_grad(a) || requires_grad(v);
    Var o = record(std::move(out), rg, "col_scale", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, v, o, m, r](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     const Tensor& va = t.nodes_[a.id].value;
                                     const Tensor& vv = t.nodes_[v.id].value;
                                     if (t.requires_grad(a)) {
                                         Tensor& ga = t.grad_buf(a.id);
                                         for (int i = 0; i < m; ++i)
                                             for (int j = 0; j < r; ++j)
                                                 ga.data[static_cast<size_t>(i) * r + j] +=
                                                     g.data[static_cast<size_t>(i) * r + j] * vv.data[static_cast<size_t>(j)];
                                     }
                                     if (t.requires_grad(v)) {
                                         Tensor& gv = t.grad_buf(v.id);
                                         for (int i = 0; i < m; ++i)
                                             for (int j = 0; j < r; ++j)
                                                 gv.data[static_cast<size_t>(j)] +=
                                                     g.data[static_cast<size_t>(i) * r + j] * va.data[static_cast<size_t>(i) * r + j];
                                     }
                                 }});
    return o;
}

Var Tape::reshape(Var a, std::vector<int> shape) {
    const Tensor& ta = value(a);
    if (shape_numel(shape) != ta.numel())
        throw_error(ErrorKind::dimension,
                    "reshape: element count mismatch " + shape_str(ta.shape) + " -> " + shape_str(shape));
    Tensor out(shape, ta.data);
    bool rg = requires_grad(a);
    Var o = record(std::move(out), rg, "reshape", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, o](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     Tensor& ga = t.grad_buf(a.id);
                                     for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
                                 }});
    return o;
}

Var Tape::slice1d(Var a, int begin, int end) {
    const Tensor& ta = value(a);
    if (ta.rank() != 1) throw_error(ErrorKind::usage, "slice1d: rank-1 tensor required");
    if (begin < 0 || end > ta.shape[0] || begin >= end)
        throw_error(ErrorKind::usage, "slice1d: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                                          ") for length " + std::to_string(ta.shape[0]));
    Tensor out({end - begin});
    for (int i = begin; i < end; ++i) out.data[static_cast<size_t>(i - begin)] = ta.data[static_cast<size_t>(i)];
    bool rg = requires_grad(a);
    Var o = record(std::move(out), rg, "slice1d", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, o, begin](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     Tensor& ga = t.grad_buf(a.id);
                                     for (size_t i = 0; i < g.data.size(); ++i) ga.data[static_cast<size_t>(begin) + i] += g.data[i];
                                 }});
    return o;
}

Var Tape::sum(Var a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (double x : ta.data) acc += x;
    bool rg = requires_grad(a);
    Var o = record(Tensor::scalar(acc), rg, "sum", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, o](Tape& t) {
                                     double g = t.nodes_[o.id].grad.data[0];
                                     Tensor& ga = t.grad_buf(a.id);
                                     for (auto& v : ga.data) v += g;
                                 }});
    return o;
}

Var Tape::l2_norm(Var a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (double x : ta.data) acc += x * x;
    double n = std::sqrt(acc);
    bool rg = requires_grad(a);
    Var o = record(Tensor::scalar(n), rg, "l2_norm", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [a, o, n](Tape& t) {
                                     if (n == 0.0) return;  // subgradient 0 at 0
                                     double g = t.nodes_[o.id].grad.data[0];
                                     const Tensor& va = t.nodes_[a.id].value;
                                     Tensor& ga = t.grad_buf(a.id);
                                     for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g * va.data[i] / n;
                                 }});
    return o;
}

Var Tape::conv2d(Var x, Var k, int pad, int stride) {
    const Tensor& tx = value(x);
    const Tensor& tk = value(k);
    if (tk.rank() != 4) throw_error(ErrorKind::dimension, "conv2d: filter must be rank 4, got " + shape_str(tk.shape));
    if (tx.rank() != 3 && tx.rank() != 4)
        throw_error(ErrorKind::dimension, "conv2d: input must be rank 3 or 4, got " + shape_str(tx.shape));
    if (pad < 0 || stride < 1) throw_error(ErrorKind::config, "conv2d: pad must be >= 0 and stride >= 1");
    bool batched = tx.rank() == 4;
    int B = batched ? tx.shape[0] : 1;
    int C = batched ? tx.shape[1] : tx.shape[0];
    int H = batched ? tx.shape[2] : tx.shape[1];
    int W = batched ? tx.shape[3] : tx.shape[2];
    int S = tk.shape[0], KC = tk.shape[1], L2 = tk.shape[2], L1 = tk.shape[3];
    if (KC != C)
        throw_error(ErrorKind::dimension, "conv2d: channel mismatch, input has " + std::to_string(C) +
                                              " channels but filter expects " + std::to_string(KC));
    int Ho = conv_out_extent(H, L2, pad, stride, "height");
    int Wo = conv_out_extent(W, L1, pad, stride, "width");

    std::vector<int> out_shape = batched ? std::vector<int>{B, S, Ho, Wo} : std::vector<int>{S, Ho, Wo};
    Tensor out(out_shape);
    const double* xd = tx.data.data();
    const double* kd = tk.data.data();
    double* od = out.data.data();
    auto xoff = [&](int b, int c) { return (static_cast<size_t>(b) * C + c) * H * W; };
    auto ooff = [&](int b, int s) { return (static_cast<size_t>(b) * S + s) * Ho * Wo; };

    for (int b = 0; b < B; ++b) {
        for (int s = 0; s < S; ++s) {
            double* oplane = od + ooff(b, s);
            for (int c = 0; c < C; ++c) {
                const double* xplane = xd + xoff(b, c);
                const double* kplane = kd + (static_cast<size_t>(s) * C + c) * L2 * L1;
                for (int l2 = 0; l2 < L2; ++l2) {
                    for (int l1 = 0; l1 < L1; ++l1) {
                        double w = kplane[static_cast<size_t>(l2) * L1 + l1];
                        SpanRange oxs = valid_span(Wo, W, pad, stride, l1);
                        for (int oy = 0; oy < Ho; ++oy) {
                            int iy = oy * stride - pad + l2;
                            if (iy < 0 || iy >= H) continue;
                            const double* xrow = xplane + static_cast<size_t>(iy) * W;
                            double* orow = oplane + static_cast<size_t>(oy) * Wo;
                            int ix = oxs.begin * stride - pad + l1;
                            for (int ox = oxs.begin; ox < oxs.end; ++ox, ix += stride) orow[ox] += w * xrow[ix];
                        }
                    }
                }
            }
        }
    }

    bool rg = requires_grad(x) || requires_grad(k);
    Var o = record(std::move(out), rg, "conv2d", nullptr);
    if (rg)
        entries_.push_back(Entry{
            o.id, [x, k, o, pad, stride, B, C, H, W, S, L2, L1, Ho, Wo](Tape& t) {
                const Tensor& g = t.nodes_[o.id].grad;
                const Tensor& vx = t.nodes_[x.id].value;
                const Tensor& vk = t.nodes_[k.id].value;
                auto xoff = [&](int b, int c) { return (static_cast<size_t>(b) * C + c) * H * W; };
                auto ooff = [&](int b, int s) { return (static_cast<size_t>(b) * S + s) * Ho * Wo; };
                if (t.requires_grad(x)) {
                    Tensor& gx = t.grad_buf(x.id);
                    for (int b = 0; b < B; ++b)
                        for (int s = 0; s < S; ++s) {
                            const double* gplane = g.data.data() + ooff(b, s);
                            for (int c = 0; c < C; ++c) {
                                double* gxplane = gx.data.data() + xoff(b, c);
                                const double* kplane = vk.data.data() + (static_cast<size_t>(s) * C + c) * L2 * L1;
                                for (int l2 = 0; l2 < L2; ++l2)
                                    for (int l1 = 0; l1 < L1; ++l1) {
                                        double w = kplane[static_cast<size_t>(l2) * L1 + l1];
                                        SpanRange oxs = valid_span(Wo, W, pad, stride, l1);
                                        for (int oy = 0; oy < Ho; ++oy) {
                                            int iy = oy * stride - pad + l2;
                                            if (iy < 0 || iy >= H) continue;
                                            const double* grow = gplane + static_cast<size_t>(oy) * Wo;
                                            double* gxrow = gxplane + static_cast<size_t>(iy) * W;
                                            int ix = oxs.begin * stride - pad + l1;
                                            for (int ox = oxs.begin; ox < oxs.end; ++ox, ix += stride)
                                                gxrow[ix] += w * grow[ox];
                                        }
                                    }
                            }
                        }
                }
                if (t.requires_grad(k)) {
                    Tensor& gk = t.grad_buf(k.id);
                    for (int b = 0; b < B; ++b)
                        for (int s = 0; s < S; ++s) {
                            const double* gplane = g.data.data() + ooff(b, s);
                            for (int c = 0; c < C; ++c) {
                                const double* xplane = vx.data.data() + xoff(b, c);
                                double* gkplane = gk.data.data() + (static_cast<size_t>(s) * C + c) * L2 * L1;
                                for (int l2 = 0; l2 < L2; ++l2)
                                    for (int l1 = 0; l1 < L1; ++l1) {
                                        SpanRange oxs = valid_span(Wo, W, pad, stride, l1);
                                        double acc = 0.0;
                                        for (int oy = 0; oy < Ho; ++oy) {
                                            int iy = oy * stride - pad + l2;
                                            if (iy < 0 || iy >= H) continue;
                                            const double* grow = gplane + static_cast<size_t>(oy) * Wo;
                                            const double* xrow = xplane + static_cast<size_t>(iy) * W;
                                            int ix = oxs.begin * stride - pad + l1;
                                            for (int ox = oxs.begin; ox < oxs.end; ++ox, ix += stride)
                                                acc += grow[ox] * xrow[ix];
                                        }
                                        gkplane[static_cast<size_t>(l2) * L1 + l1] += acc;
                                    }
                            }
                        }
                }
            }});
    return o;
}

Var Tape::bias_add(Var x, Var b) {
    const Tensor& tx = value(x);
    const Tensor& tb = value(b);
    if (tb.rank() != 1) throw_error(ErrorKind::dimension, "bias_add: bias must be rank 1");
    int rank = tx.rank();
    int channels;
    long long plane;
    long long batch;
    if (rank == 2) {  // [B, D] + [D]
        batch = tx.shape[0];
        channels = tx.shape[1];
        plane = 1;
    } else if (rank == 3) {  // [S, H, W] + [S]
        batch = 1;
        channels = tx.shape[0];
        plane = static_cast<long long>(tx.shape[1]) * tx.shape[2];
    } else if (rank == 4) {  // [B, S, H, W] + [S]
        batch = tx.shape[0];
        channels = tx.shape[1];
        plane = static_cast<long long>(tx.shape[2]) * tx.shape[3];
    } else {
        throw_error(ErrorKind::dimension, "bias_add: input must be rank 2..4, got " + shape_str(tx.shape));
    }
    if (tb.shape[0] != channels)
        throw_error(ErrorKind::dimension, "bias_add: bias length " + std::to_string(tb.shape[0]) +
                                              " does not match channel count " + std::to_string(channels));
    Tensor out(tx.shape);
    {
        size_t idx = 0;
        for (long long bi = 0; bi < batch; ++bi)
            for (int c = 0; c < channels; ++c) {
                double bv = tb.data[static_cast<size_t>(c)];
                for (long long p = 0; p < plane; ++p, ++idx) out.data[idx] = tx.data[idx] + bv;
            }
    }
    bool rg = requires_grad(x) || requires_grad(b);
    Var o = record(std::move(out), rg, "bias_add", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [x, b, o, batch, channels, plane](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     if (t.requires_grad(x)) {
                                         Tensor& gx = t.grad_buf(x.id);
                                         for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
                                     }
                                     if (t.requires_grad(b)) {
                                         Tensor& gb = t.grad_buf(b.id);
                                         size_t idx = 0;
                                         for (long long bi = 0; bi < batch; ++bi)
                                             for (int c = 0; c < channels; ++c) {
                                                 double acc = 0.0;
                                                 for (long long p = 0; p < plane; ++p, ++idx) acc += g.data[idx];
                                                 gb.data[static_cast<size_t>(c)] += acc;
                                             }
                                     }
                                 }});
    return o;
}

Var Tape::avg_pool2d(Var x, int kk) {
    const Tensor& tx = value(x);
    if (tx.rank() != 4) throw_error(ErrorKind::dimension, "avg_pool2d: rank-4 input required, got " + shape_str(tx.shape));
    if (kk < 1) throw_error(ErrorKind::config, "avg_pool2d: window must be >= 1");
    int B = tx.shape[0], C = tx.shape[1], H = tx.shape[2], W = tx.shape[3];
    if (H % kk != 0 || W % kk != 0)
        throw_error(ErrorKind::config, "avg_pool2d: spatial extents " + std::to_string(H) + "x" + std::to_string(W) +
                                           " not divisible by window " + std::to_string(kk));
    int Ho = H / kk, Wo = W / kk;
    double inv = 1.0 / (kk * kk);
    Tensor out({B, C, Ho, Wo});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double* xp = &tx.data[(static_cast<size_t>(b) * C + c) * H * W];
            double* op = &out.data[(static_cast<size_t>(b) * C + c) * Ho * Wo];
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = 0.0;
                    for (int dy = 0; dy < kk; ++dy)
                        for (int dx = 0; dx < kk; ++dx) acc += xp[static_cast<size_t>(oy * kk + dy) * W + ox * kk + dx];
                    op[static_cast<size_t>(oy) * Wo + ox] = acc * inv;
                }
        }
    bool rg = requires_grad(x);
    Var o = record(std::move(out), rg, "avg_pool2d", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [x, o, kk, B, C, H, W, Ho, Wo, inv](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     Tensor& gx = t.grad_buf(x.id);
                                     for (int b = 0; b < B; ++b)
                                         for (int c = 0; c < C; ++c) {
                                             double* gxp = &gx.data[(static_cast<size_t>(b) * C + c) * H * W];
                                             const double* gp = &g.data[(static_cast<size_t>(b) * C + c) * Ho * Wo];
                                             for (int oy = 0; oy < Ho; ++oy)
                                                 for (int ox = 0; ox < Wo; ++ox) {
                                                     double gv = gp[static_cast<size_t>(oy) * Wo + ox] * inv;
                                                     for (int dy = 0; dy < kk; ++dy)
                                                         for (int dx = 0; dx < kk; ++dx)
                                                             gxp[static_cast<size_t>(oy * kk + dy) * W + ox * kk + dx] += gv;
                                                 }
                                         }
                                 }});
    return o;
}

Var Tape::global_avg_pool(Var x) {
    const Tensor& tx = value(x);
    if (tx.rank() != 4)
        throw_error(ErrorKind::dimension, "global_avg_pool: rank-4 input required, got " + shape_str(tx.shape));
    int B = tx.shape[0], C = tx.shape[1], H = tx.shape[2], W = tx.shape[3];
    double inv = 1.0 / (static_cast<double>(H) * W);
    Tensor out({B, C});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double* xp = &tx.data[(static_cast<size_t>(b) * C + c) * H * W];
            double acc = 0.0;
            for (long long i = 0; i < static_cast<long long>(H) * W; ++i) acc += xp[i];
            out(b, c) = acc * inv;
        }
    bool rg = requires_grad(x);
    Var o = record(std::move(out), rg, "global_avg_pool", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [x, o, B, C, H, W, inv](Tape& t) {
                                     const Tensor& g = t.nodes_[o.id].grad;
                                     Tensor& gx = t.grad_buf(x.id);
                                     for (int b = 0; b < B; ++b)
                                         for (int c = 0; c < C; ++c) {
                                             double gv = g.data[static_cast<size_t>(b) * C + c] * inv;
                                             double* gxp = &gx.data[(static_cast<size_t>(b) * C + c) * H * W];
                                             for (long long i = 0; i < static_cast<long long>(H) * W; ++i) gxp[i] += gv;
                                         }
                                 }});
    return o;
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& labels) {
    const Tensor& tl = value(logits);
    if (tl.rank() != 2) throw_error(ErrorKind::dimension, "cross_entropy: logits must be rank 2, got " + shape_str(tl.shape));
    int B = tl.shape[0], nc = tl.shape[1];
    if (nc < 2) throw_error(ErrorKind::usage, "cross_entropy: at least 2 classes required");
    if (static_cast<int>(labels.size()) != B)
        throw_error(ErrorKind::dimension, "cross_entropy: got " + std::to_string(labels.size()) + " labels for batch of " +
                                              std::to_string(B));
    for (int i = 0; i < B; ++i)
        if (labels[i] < 0 || labels[i] >= nc)
            throw_error(ErrorKind::input, "cross_entropy: label " + std::to_string(labels[i]) + " out of range [0," +
                                              std::to_string(nc) + ") at row " + std::to_string(i));

    Tensor softmax({B, nc});
    double loss = 0.0;
    for (int i = 0; i < B; ++i) {
        const double* row = &tl.data[static_cast<size_t>(i) * nc];
        double mx = row[0];
        for (int j = 1; j < nc; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < nc; ++j) {
            double e = std::exp(row[j] - mx);
            softmax(i, j) = e;
            z += e;
        }
        for (int j = 0; j < nc; ++j) softmax(i, j) /= z;
        loss -= (row[labels[i]] - mx - std::log(z));
    }
    loss /= B;
    bool rg = requires_grad(logits);
    Var o = record(Tensor::scalar(loss), rg, "cross_entropy", nullptr);
    if (rg)
        entries_.push_back(Entry{o.id, [logits, o, labels, softmax, B, nc](Tape& t) {
                                     double g = t.nodes_[o.id].grad.data[0];
                                     Tensor& gl = t.grad_buf(logits.id);
                                     double invB = 1.0 / B;
                                     for (int i = 0; i < B; ++i)
                                         for (int j = 0; j < nc; ++j) {
                                             double d = softmax(i, j) - (labels[i] == j ? 1.0 : 0.0);
                                             gl.data[static_cast<size_t>(i) * nc + j] += g * d * invB;
                                         }
                                 }});
    return o;
}

void Tape::backward(Var loss) {
    if (backward_done_) throw_error(ErrorKind::usage, "backward: tape already consumed");
    const Tensor& tl = value(loss);
    if (tl.numel() != 1) throw_error(ErrorKind::usage, "backward: loss must be a scalar, got " + shape_str(tl.shape));
    backward_done_ = true;
    grad_buf(loss.id).data[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        Tensor& og = grad_buf(it->output);
        ensure_finite(og, "backward");
        quantize_inplace(og);
        it->back(*this);
    }
    if (precision() == Precision::f32) {
        for (auto& n : nodes_)
            if (n.requires_grad && !n.grad.data.empty()) quantize_inplace(n.grad);
    }
    // parameters not reached by the loss keep zero gradients
    for (auto& n : nodes_)
        if (n.requires_grad && n.grad.data.empty()) n.grad = Tensor(n.value.shape);
}

}  // namespace dprp
