#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dprp/layers.hpp"
#include "dprp/model.hpp"
#include "dprp/tensor.hpp"

namespace dprp {

// (dense, factorized) trainable counts at rank r, biases excluded.
// conv: (S*C*L1*L2, r*(S*C + L1*L2 + 1)); fc: (D1*D2, r*(D1 + D2 + 1)).
std::pair<long long, long long> param_counts(const LayerSpec& spec, int r);

// 1 - P_fact / P_dense. Negative when the factorized form is larger.
double compression_rate(const LayerSpec& spec, int r);

// Largest rank at which the factorized form is no bigger than the dense one.
int break_even_rank(const LayerSpec& spec);

struct LayerAccount {
    std::string name;
    LayerKind kind = LayerKind::conv;
    bool factorized = false;
    int h = 0;
    int w = 0;
    int theta = 0;  // full rank min(h, w)
    int r = 0;      // current rank; theta for dense layers
    long long p_dense = 0;
    long long p_fact = 0;
    long long bias = 0;
    double rate = 0.0;         // 1 - p_fact / p_dense
    long long macs = 0;        // as configured; factorization adds the
                               // reconstruction cost r*h*w
    long long macs_dense = 0;  // dense equivalent
};

struct ModelAccount {
    std::vector<LayerAccount> layers;
    long long p_dense_total = 0;  // biases excluded
    long long p_fact_total = 0;
    long long bias_total = 0;
    long long params = 0;        // actual trainables, biases included
    long long params_dense = 0;  // dense equivalent, biases included
    double rate = 0.0;           // whole-model 1 - params / params_dense
    long long macs = 0;
    long long macs_dense = 0;
};

// Resolves shapes through the node list for one input and tallies parameters
// and multiply-accumulates. ranks carries one entry per factorized layer in
// order. Pooling, bias adds and activations contribute no multiplies.
ModelAccount account(const Architecture& arch, const std::vector<int>& ranks);
ModelAccount account(const Model& model);

// Total multiply-accumulates for one input.
long long mac_count(const Architecture& arch, const std::vector<int>& ranks);

// Fraction of rows whose label is among the k largest logits; equal logits
// rank lower class indices first. topk_hits returns the raw count.
long long topk_hits(const Tensor& logits, const std::vector<int>& labels, int k);
double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, int k);

// a_source * a_base_ours / a_base_source.
double scaled_accuracy(double a_source, double a_base_source, double a_base_ours);

}  // namespace dprp
