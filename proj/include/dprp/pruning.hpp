#pragma once

#include <optional>
#include <vector>

#include "dprp/layers.hpp"
#include "dprp/losses.hpp"

namespace dprp {

struct PruneEvent {
    int epoch = -1;
    int layer = -1;
    int rank_before = 0;
    int rank_after = 0;
    std::vector<double> removed_sigma;
    long long params_removed = 0;
};

// The epsilon-ratio rule: tau is the longest prefix of sigma such that every
// consecutive pair inside it satisfies |sigma_{i+1}| > epsilon * |sigma_i|.
// The leading singular value is never marked, so tau >= 1.
int compute_tau(const Tensor& sigma, double epsilon);

// Optimizer momentum buffers that must shrink in lockstep with the factors.
struct MomentumRefs {
    Tensor* U = nullptr;
    Tensor* sigma = nullptr;
    Tensor* V = nullptr;
};

// Keeps the first tau columns of U and V and first tau sigma entries. Returns
// no event when tau equals the current rank (identity). The caller fills in
// epoch and layer ids on the event.
std::optional<PruneEvent> truncate(FactorizedParam& param, int tau, const MomentumRefs& momentum = {});

class Model;
struct SgdState;

// Runs compute_tau + truncate over every factorized layer; called once per
// epoch after the last optimizer update. Active in every mode.
std::vector<PruneEvent> prune_step(Model& model, SgdState& opt, const LossConfig& cfg, int epoch);

}  // namespace dprp
