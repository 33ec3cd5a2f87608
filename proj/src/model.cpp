#include "dprp/model.hpp"

#include <utility>

#include "dprp/error.hpp"

namespace dprp {

void Architecture::validate() const {
    if (in_channels <= 0 || in_h <= 0 || in_w <= 0)
        throw_error(ErrorKind::config, "architecture: input shape must be positive, got " +
                                           std::to_string(in_channels) + "x" + std::to_string(in_h) +
                                           "x" + std::to_string(in_w));
    if (n_classes < 2)
        throw_error(ErrorKind::config,
                    "architecture: need at least 2 classes, got " + std::to_string(n_classes));
    if (nodes.empty()) throw_error(ErrorKind::config, "architecture: empty node list");
    for (const ArchNode& node : nodes) {
        if (node.kind == NodeKind::layer)
            node.layer.validate();
        else if (node.kind == NodeKind::avg_pool && node.pool_k < 1)
            throw_error(ErrorKind::config,
                        "architecture: pool size must be positive, got " + std::to_string(node.pool_k));
    }
}

namespace {

ArchNode conv_node(int S, int C, bool factorized, bool relu = true) {
    ArchNode node;
    node.kind = NodeKind::layer;
    node.layer.kind = LayerKind::conv;
    node.layer.conv = ConvShape{S, C, 3, 3, 1, 1};
    node.layer.factorized = factorized;
    node.layer.relu = relu;
    return node;
}

ArchNode fc_node(int D1, int D2, bool factorized) {
    ArchNode node;
    node.kind = NodeKind::layer;
    node.layer.kind = LayerKind::fc;
    node.layer.fc = FcShape{D1, D2};
    node.layer.factorized = factorized;
    return node;
}

ArchNode pool_node(int k) {
    ArchNode node;
    node.kind = NodeKind::avg_pool;
    node.pool_k = k;
    return node;
}

ArchNode gap_node() {
    ArchNode node;
    node.kind = NodeKind::global_avg_pool;
    return node;
}

}  // namespace

Architecture desk_architecture(int n_classes, int in_channels, int in_hw) {
    Architecture arch;
    arch.name = "desk";
    arch.in_channels = in_channels;
    arch.in_h = in_hw;
    arch.in_w = in_hw;
    arch.n_classes = n_classes;
    arch.nodes.push_back(conv_node(8, in_channels, true));
    arch.nodes.push_back(pool_node(2));
    arch.nodes.push_back(conv_node(16, 8, true));
    arch.nodes.push_back(pool_node(2));
    arch.nodes.push_back(conv_node(32, 16, true));
    arch.nodes.push_back(gap_node());
    arch.nodes.push_back(fc_node(32, n_classes, true));
    arch.validate();
    return arch;
}

Architecture resnet20_architecture() {
    Architecture arch;
    arch.name = "resnet20-shape";
    arch.in_channels = 3;
    arch.in_h = 32;
    arch.in_w = 32;
    arch.n_classes = 10;
    arch.nodes.push_back(conv_node(16, 3, false));
    for (int i = 0; i < 6; ++i) arch.nodes.push_back(conv_node(16, 16, false));
    arch.nodes.push_back(pool_node(2));
    arch.nodes.push_back(conv_node(32, 16, false));
    for (int i = 0; i < 5; ++i) arch.nodes.push_back(conv_node(32, 32, false));
    arch.nodes.push_back(pool_node(2));
    arch.nodes.push_back(conv_node(64, 32, false));
    for (int i = 0; i < 5; ++i) arch.nodes.push_back(conv_node(64, 64, false));
    arch.nodes.push_back(gap_node());
    arch.nodes.push_back(fc_node(64, 10, false));
    arch.validate();
    return arch;
}

Model::Model(Architecture arch, Rng& rng) : arch_(std::move(arch)) {
    arch_.validate();
    int conv_i = 0;
    int fc_i = 0;
    for (const ArchNode& node : arch_.nodes) {
        if (node.kind != NodeKind::layer) continue;
        ModelLayer layer;
        layer.spec = node.layer;
        layer.name = node.layer.kind == LayerKind::conv ? "conv" + std::to_string(++conv_i)
                                                        : "fc" + std::to_string(++fc_i);
        if (node.layer.factorized)
            layer.fact = init_factorized(node.layer, rng);
        else
            layer.dense = init_dense(node.layer, rng);
        layers_.push_back(std::move(layer));
    }
}

Var Model::forward(Tape& tape, const Tensor& x, std::vector<LayerBinding>* bindings) const {
    if (bindings) bindings->clear();
    Var cur = tape.constant(x);
    size_t li = 0;
    for (const ArchNode& node : arch_.nodes) {
        switch (node.kind) {
            case NodeKind::layer: {
                const ModelLayer& layer = layers_[li++];
                LayerBinding binding;
                if (layer.spec.factorized) {
                    binding.fact = register_params(tape, layer.fact);
                    cur = layer.spec.kind == LayerKind::conv
                              ? forward_conv(tape, binding.fact, layer.spec.conv, cur)
                              : forward_fc(tape, binding.fact, cur);
                } else {
                    binding.dense = register_params(tape, layer.dense);
                    cur = layer.spec.kind == LayerKind::conv
                              ? forward_dense_conv(tape, binding.dense, layer.spec.conv, cur)
                              : forward_dense_fc(tape, binding.dense, cur);
                }
                if (layer.spec.relu) cur = tape.relu(cur);
                if (bindings) bindings->push_back(binding);
                break;
            }
            case NodeKind::avg_pool:
                cur = tape.avg_pool2d(cur, node.pool_k);
                break;
            case NodeKind::global_avg_pool:
                cur = tape.global_avg_pool(cur);
                break;
        }
    }
    return cur;
}

std::vector<int> Model::predict(const Tensor& x) const {
    Tape tape;
    const Tensor& logits = tape.value(forward(tape, x));
    if (logits.rank() != 2)
        throw_error(ErrorKind::usage, "predict: logits have shape " + shape_str(logits.shape));
    int b = logits.shape[0];
    int n_c = logits.shape[1];
    std::vector<int> out(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        int best = 0;
        for (int j = 1; j < n_c; ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

std::vector<int> Model::ranks() const {
    std::vector<int> out;
    for (const ModelLayer& layer : layers_)
        if (layer.spec.factorized) out.push_back(layer.fact.r);
    return out;
}

std::vector<NamedTensor> Model::named_parameters() {
    std::vector<NamedTensor> out;
    for (ModelLayer& layer : layers_) {
        if (layer.spec.factorized) {
            out.push_back({layer.name + ".U", &layer.fact.U});
            out.push_back({layer.name + ".sigma", &layer.fact.sigma});
            out.push_back({layer.name + ".V", &layer.fact.V});
            if (layer.fact.bias) out.push_back({layer.name + ".bias", &*layer.fact.bias});
        } else {
            out.push_back({layer.name + ".weight", &layer.dense.weight});
            if (layer.dense.bias) out.push_back({layer.name + ".bias", &*layer.dense.bias});
        }
    }
    return out;
}

std::vector<Var> Model::param_vars(const std::vector<LayerBinding>& bindings) const {
    if (bindings.size() != layers_.size())
        throw_error(ErrorKind::usage, "param_vars: " + std::to_string(bindings.size()) +
                                          " bindings for " + std::to_string(layers_.size()) + " layers");
    std::vector<Var> out;
    for (size_t i = 0; i < layers_.size(); ++i) {
        const LayerBinding& b = bindings[i];
        if (layers_[i].spec.factorized) {
            out.push_back(b.fact.U);
            out.push_back(b.fact.sigma);
            out.push_back(b.fact.V);
            if (b.fact.bias) out.push_back(*b.fact.bias);
        } else {
            out.push_back(b.dense.weight);
            if (b.dense.bias) out.push_back(*b.dense.bias);
        }
    }
    return out;
}

long long Model::trainable_count() const {
    long long total = 0;
    for (const ModelLayer& layer : layers_)
        total += layer.spec.factorized ? layer.fact.trainable_count() : layer.dense.trainable_count();
    return total;
}

}  // namespace dprp
