#pragma once

#include <string>
#include <vector>

#include "dprp/autograd.hpp"
#include "dprp/layers.hpp"

namespace dprp {

enum class RegMode { proposed, none, l1, l2, funnel };

RegMode reg_mode_from_string(const std::string& s);
std::string reg_mode_to_string(RegMode m);

struct LossConfig {
    double lambda_str = 1.0;
    double lambda_comp = 0.1;
    double mu_orth = 1000.0;
    double mu_sort = 1.0;
    double epsilon = 0.1;
    RegMode mode = RegMode::proposed;
    double lambda_reg = 0.1;
    double delta = 0.01;

    void validate() const;
};

// Counting statistics of one sigma vector; the chi factors enter the sorting
// loss as detached constants recomputed each step.
struct SortStats {
    int gamma = 0;       // ascents: j in [2, r] with sigma_j > sigma_{j-1}
    int eta = 0;         // negative entries
    double chi_gamma = 0.0;
    double chi_eta = 0.0;
};

SortStats sort_stats(const Tensor& sigma);

// Detached per-layer constants for the compression loss.
struct CompStats {
    int tau = 0;
    double sigma_norm = 0.0;
};

struct LossBreakdown {
    double app = 0.0;
    double orth = 0.0;
    double sort = 0.0;
    double comp = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

// Orthogonality: (1/L) sum_l (1/r_l^2) (|U^T U - I|_F + |V^T V - I|_F).
Var orth_loss(Tape& tape, const std::vector<LayerVars>& layers);

// Sorting penalty with chi factors supplied per layer.
Var sort_loss(Tape& tape, const std::vector<LayerVars>& layers, const std::vector<SortStats>& stats);

// Tail-magnitude compression penalty with tau and the detached norm supplied
// per layer; layers with tau = r or zero norm contribute nothing.
Var comp_loss(Tape& tape, const std::vector<LayerVars>& layers, const std::vector<CompStats>& stats);

// Baseline regularizers: l1, l2, funnel.
Var ablation_reg(Tape& tape, const std::vector<LayerVars>& layers, RegMode mode, double delta);

// Assembles the total loss for the configured mode. comp_stats are consulted
// only in proposed mode and must align with layers. Terms with zero weight are
// skipped entirely so a fully unweighted total is bitwise equal to app.
Var total_loss(Tape& tape, Var app, const std::vector<LayerVars>& layers, const LossConfig& cfg,
               const std::vector<CompStats>& comp_stats, LossBreakdown* breakdown = nullptr);

}  // namespace dprp
