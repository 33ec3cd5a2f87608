#include "dprp/metrics.hpp"

#include <algorithm>

#include "dprp/error.hpp"

namespace dprp {

namespace {

void check_rank(const LayerSpec& spec, int r) {
    int theta = std::min(spec.matricized_h(), spec.matricized_w());
    if (r < 1 || r > theta)
        throw_error(ErrorKind::usage, "rank " + std::to_string(r) + " outside [1, " +
                                          std::to_string(theta) + "] for layer of shape " +
                                          std::to_string(spec.matricized_h()) + "x" +
                                          std::to_string(spec.matricized_w()));
}

int pooled_extent(int extent, int k, const char* axis) {
    if (extent % k != 0)
        throw_error(ErrorKind::config, std::string("avg_pool: ") + axis + " extent " +
                                           std::to_string(extent) + " not divisible by " +
                                           std::to_string(k));
    return extent / k;
}

int conv_extent(int extent, int l, int pad, int stride, const char* axis) {
    int span = extent - l + 2 * pad;
    if (span < 0 || span % stride != 0)
        throw_error(ErrorKind::config, std::string("conv: ") + axis + " extent " +
                                           std::to_string(extent) + " unresolvable with kernel " +
                                           std::to_string(l) + ", pad " + std::to_string(pad) +
                                           ", stride " + std::to_string(stride));
    return span / stride + 1;
}

}  // namespace

std::pair<long long, long long> param_counts(const LayerSpec& spec, int r) {
    spec.validate();
    check_rank(spec, r);
    long long h = spec.matricized_h();
    long long w = spec.matricized_w();
    return {h * w, r * (h + w + 1)};
}

double compression_rate(const LayerSpec& spec, int r) {
    auto [dense, fact] = param_counts(spec, r);
    return 1.0 - static_cast<double>(fact) / static_cast<double>(dense);
}

int break_even_rank(const LayerSpec& spec) {
    spec.validate();
    long long h = spec.matricized_h();
    long long w = spec.matricized_w();
    return static_cast<int>(h * w / (h + w + 1));
}

ModelAccount account(const Architecture& arch, const std::vector<int>& ranks) {
    arch.validate();
    ModelAccount acc;
    int c = arch.in_channels;
    int hh = arch.in_h;
    int ww = arch.in_w;
    int conv_i = 0;
    int fc_i = 0;
    size_t rank_i = 0;
    for (const ArchNode& node : arch.nodes) {
        if (node.kind == NodeKind::avg_pool) {
            hh = pooled_extent(hh, node.pool_k, "height");
            ww = pooled_extent(ww, node.pool_k, "width");
            continue;
        }
        if (node.kind == NodeKind::global_avg_pool) {
            hh = 1;
            ww = 1;
            continue;
        }
        const LayerSpec& spec = node.layer;
        LayerAccount la;
        la.kind = spec.kind;
        la.factorized = spec.factorized;
        la.h = spec.matricized_h();
        la.w = spec.matricized_w();
        la.theta = std::min(la.h, la.w);
        if (spec.factorized) {
            if (rank_i >= ranks.size())
                throw_error(ErrorKind::usage, "account: rank list shorter than factorized layer count");
            la.r = ranks[rank_i++];
        } else {
            la.r = la.theta;
        }
        auto [dense, fact] = param_counts(spec, la.r);
        la.p_dense = dense;
        la.p_fact = fact;
        la.bias = spec.bias ? spec.bias_len() : 0;
        la.rate = 1.0 - static_cast<double>(fact) / static_cast<double>(dense);
        long long positions = 0;
        if (spec.kind == LayerKind::conv) {
            const ConvShape& cs = spec.conv;
            if (cs.C != c)
                throw_error(ErrorKind::config, "conv expects " + std::to_string(cs.C) +
                                                   " channels, input has " + std::to_string(c));
            int oh = conv_extent(hh, cs.L2, cs.p, cs.s, "height");
            int ow = conv_extent(ww, cs.L1, cs.p, cs.s, "width");
            positions = static_cast<long long>(oh) * ow;
            la.name = "conv" + std::to_string(++conv_i);
            la.macs_dense = la.p_dense * positions;
            la.macs = la.macs_dense;
            // reconstructing the filter from the factors costs r*h*w multiplies
            if (spec.factorized) la.macs += static_cast<long long>(la.r) * la.h * la.w;
            c = cs.S;
            hh = oh;
            ww = ow;
        } else {
            if (hh != 1 || ww != 1 || c != spec.fc.D1)
                throw_error(ErrorKind::config, "fc expects a length-" + std::to_string(spec.fc.D1) +
                                                   " feature vector, input is " + std::to_string(c) +
                                                   "x" + std::to_string(hh) + "x" + std::to_string(ww));
            la.name = "fc" + std::to_string(++fc_i);
            la.macs_dense = la.p_dense;
            la.macs = spec.factorized ? static_cast<long long>(la.r) * (spec.fc.D1 + spec.fc.D2)
                                      : la.p_dense;
            c = spec.fc.D2;
        }
        acc.p_dense_total += la.p_dense;
        acc.p_fact_total += la.p_fact;
        acc.bias_total += la.bias;
        acc.params += (la.factorized ? la.p_fact : la.p_dense) + la.bias;
        acc.params_dense += la.p_dense + la.bias;
        acc.macs += la.macs;
        acc.macs_dense += la.macs_dense;
        acc.layers.push_back(std::move(la));
    }
    if (rank_i != ranks.size())
        throw_error(ErrorKind::usage, "account: rank list longer than factorized layer count");
    acc.rate = 1.0 - static_cast<double>(acc.params) / static_cast<double>(acc.params_dense);
    return acc;
}

ModelAccount account(const Model& model) { return account(model.arch(), model.ranks()); }

long long mac_count(const Architecture& arch, const std::vector<int>& ranks) {
    return account(arch, ranks).macs;
}

long long topk_hits(const Tensor& logits, const std::vector<int>& labels, int k) {
    if (logits.rank() != 2)
        throw_error(ErrorKind::dimension, "topk_accuracy: logits must be rank 2, got " +
                                              shape_str(logits.shape));
    int b = logits.shape[0];
    int n_c = logits.shape[1];
    if (static_cast<int>(labels.size()) != b)
        throw_error(ErrorKind::dimension, "topk_accuracy: " + std::to_string(labels.size()) +
                                              " labels for " + std::to_string(b) + " rows");
    if (k < 1 || k > n_c)
        throw_error(ErrorKind::usage, "topk_accuracy: k = " + std::to_string(k) +
                                          " outside [1, " + std::to_string(n_c) + "]");
    long long hits = 0;
    for (int i = 0; i < b; ++i) {
        int label = labels[static_cast<size_t>(i)];
        if (label < 0 || label >= n_c)
            throw_error(ErrorKind::input, "topk_accuracy: label " + std::to_string(label) +
                                              " outside [0, " + std::to_string(n_c) + ")");
        double ref = logits(i, label);
        // rank of the label under "higher logit first, lower index on ties"
        int ahead = 0;
        for (int j = 0; j < n_c; ++j)
            if (logits(i, j) > ref || (logits(i, j) == ref && j < label)) ++ahead;
        if (ahead < k) ++hits;
    }
    return hits;
}

double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, int k) {
    long long hits = topk_hits(logits, labels, k);
    int b = logits.shape[0];
    if (b == 0) return 0.0;
    return static_cast<double>(hits) / static_cast<double>(b);
}

double scaled_accuracy(double a_source, double a_base_source, double a_base_ours) {
    if (!(a_base_source > 0.0))
        throw_error(ErrorKind::input, "scaled_accuracy: baseline denominator must be positive, got " +
                                          std::to_string(a_base_source));
    return a_source * a_base_ours / a_base_source;
}

}  // namespace dprp
