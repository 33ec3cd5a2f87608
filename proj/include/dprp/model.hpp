#pragma once

#include <string>
#include <vector>

#include "dprp/layers.hpp"
#include "dprp/rng.hpp"

namespace dprp {

enum class NodeKind { layer, avg_pool, global_avg_pool };

struct ArchNode {
    NodeKind kind = NodeKind::layer;
    LayerSpec layer;  // used when kind == layer
    int pool_k = 2;   // used when kind == avg_pool
};

// Static description of a sequential network: input shape plus an ordered
// node list. Downsampling is expressed with pooling nodes.
struct Architecture {
    std::string name;
    int in_channels = 0;
    int in_h = 0;
    int in_w = 0;
    int n_classes = 0;
    std::vector<ArchNode> nodes;

    void validate() const;
};

// conv(3->8) -> pool -> conv(8->16) -> pool -> conv(16->32) -> gap -> fc,
// relu after each conv, every conv and the fc factorized.
Architecture desk_architecture(int n_classes, int in_channels = 3, int in_hw = 32);

// ResNet-20 layer sequence with dense layers, for accounting only. The
// shortcuts are parameter-free and pooling stands in for the two strided
// convolutions; the multiply totals match the strided formulation exactly.
Architecture resnet20_architecture();

// One layer's live parameters inside a Model.
struct ModelLayer {
    std::string name;
    LayerSpec spec;
    FactorizedParam fact;  // when spec.factorized
    DenseParam dense;      // otherwise
};

// Tape handles for one layer from one forward build; aligned with
// Model::layers().
struct LayerBinding {
    LayerVars fact;
    DenseVars dense;
};

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

class Model {
  public:
    Model(Architecture arch, Rng& rng);

    const Architecture& arch() const { return arch_; }
    std::vector<ModelLayer>& layers() { return layers_; }
    const std::vector<ModelLayer>& layers() const { return layers_; }

    // Registers every parameter on the tape and builds the graph from input
    // to logits. x: [B,C,H,W]. bindings, when given, receives one entry per
    // layer in order.
    Var forward(Tape& tape, const Tensor& x, std::vector<LayerBinding>* bindings = nullptr) const;

    // Argmax class per row of logits; equal logits pick the lower index.
    std::vector<int> predict(const Tensor& x) const;

    // Current rank of each factorized layer, in layer order.
    std::vector<int> ranks() const;

    // Stable name -> storage for every trainable tensor, e.g. "conv1.U",
    // "conv1.sigma", "conv1.V", "conv1.bias". Order is fixed.
    std::vector<NamedTensor> named_parameters();

    // Tape handles for every trainable tensor, in named_parameters() order.
    std::vector<Var> param_vars(const std::vector<LayerBinding>& bindings) const;

    long long trainable_count() const;

  private:
    Architecture arch_;
    std::vector<ModelLayer> layers_;
};

}  // namespace dprp
