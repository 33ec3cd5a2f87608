#include "dprp/losses.hpp"

#include <cmath>
#include <optional>

namespace dprp {

RegMode reg_mode_from_string(const std::string& s) {
    if (s == "proposed") return RegMode::proposed;
    if (s == "none") return RegMode::none;
    if (s == "l1") return RegMode::l1;
    if (s == "l2") return RegMode::l2;
    if (s == "funnel") return RegMode::funnel;
    throw_error(ErrorKind::config, "unknown regularization mode '" + s + "'");
}

std::string reg_mode_to_string(RegMode m) {
    switch (m) {
        case RegMode::proposed: return "proposed";
        case RegMode::none: return "none";
        case RegMode::l1: return "l1";
        case RegMode::l2: return "l2";
        case RegMode::funnel: return "funnel";
    }
    return "?";
}

void LossConfig::validate() const {
    if (lambda_str < 0.0 || lambda_comp < 0.0 || mu_orth < 0.0 || mu_sort < 0.0 || lambda_reg < 0.0)
        throw_error(ErrorKind::config, "loss weights must be non-negative");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw_error(ErrorKind::config, "epsilon must lie in (0,1), got " + std::to_string(epsilon));
    if (mode == RegMode::funnel && !(delta > 0.0))
        throw_error(ErrorKind::config, "funnel mode requires delta > 0");
}

SortStats sort_stats(const Tensor& sigma) {
    SortStats st;
    int r = sigma.shape.empty() ? 1 : sigma.shape[0];
    for (int i = 1; i < r; ++i)
        if (sigma.data[static_cast<size_t>(i)] > sigma.data[static_cast<size_t>(i - 1)]) ++st.gamma;
    for (int i = 0; i < r; ++i)
        if (sigma.data[static_cast<size_t>(i)] < 0.0) ++st.eta;
    st.chi_gamma = st.gamma > 0 ? 1.0 / st.gamma : 0.0;
    st.chi_eta = st.eta > 0 ? 1.0 / st.eta : 0.0;
    return st;
}

namespace {

Var accumulate(Tape& tape, std::optional<Var>& acc, Var term) {
    acc = acc ? tape.add(*acc, term) : term;
    return *acc;
}

Var finish_average(Tape& tape, std::optional<Var>& acc, size_t layer_count) {
    if (!acc) return tape.constant(Tensor::scalar(0.0));
    return tape.scale(*acc, 1.0 / static_cast<double>(layer_count));
}

}  // namespace

Var orth_loss(Tape& tape, const std::vector<LayerVars>& layers) {
    if (layers.empty()) throw_error(ErrorKind::usage, "orth_loss: at least one layer required");
    std::optional<Var> acc;
    for (const auto& l : layers) {
        int r = tape.value(l.sigma).shape[0];
        Var gu = tape.matmul(tape.transpose(l.U), l.U);
        Var du = tape.l2_norm(tape.sub(gu, tape.constant(Tensor::identity(r))));
        Var gv = tape.matmul(tape.transpose(l.V), l.V);
        Var dv = tape.l2_norm(tape.sub(gv, tape.constant(Tensor::identity(r))));
        accumulate(tape, acc, tape.scale(tape.add(du, dv), 1.0 / (static_cast<double>(r) * r)));
    }
    return finish_average(tape, acc, layers.size());
}

Var sort_loss(Tape& tape, const std::vector<LayerVars>& layers, const std::vector<SortStats>& stats) {
    if (layers.empty()) throw_error(ErrorKind::usage, "sort_loss: at least one layer required");
    if (stats.size() != layers.size()) throw_error(ErrorKind::usage, "sort_loss: stats/layers length mismatch");
    std::optional<Var> acc;
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        int r = tape.value(l.sigma).shape[0];
        if (r < 2) continue;  // penalty ranges over j = 1..r-1
        Var head = tape.slice1d(l.sigma, 0, r - 1);
        if (stats[i].chi_gamma > 0.0) {
            Var tail = tape.slice1d(l.sigma, 1, r);
            Var ascent = tape.sum(tape.relu(tape.sub(tail, head)));
            accumulate(tape, acc, tape.scale(ascent, stats[i].chi_gamma));
        }
        if (stats[i].chi_eta > 0.0) {
            Var negativity = tape.sum(tape.relu(tape.scale(head, -1.0)));
            accumulate(tape, acc, tape.scale(negativity, stats[i].chi_eta));
        }
    }
    return finish_average(tape, acc, layers.size());
}

Var comp_loss(Tape& tape, const std::vector<LayerVars>& layers, const std::vector<CompStats>& stats) {
    if (layers.empty()) throw_error(ErrorKind::usage, "comp_loss: at least one layer required");
    if (stats.size() != layers.size()) throw_error(ErrorKind::usage, "comp_loss: stats/layers length mismatch");
    std::optional<Var> acc;
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        int r = tape.value(l.sigma).shape[0];
        int tau = stats[i].tau;
        if (tau < 1 || tau > r) throw_error(ErrorKind::usage, "comp_loss: tau out of range");
        if (tau == r) continue;
        if (!(stats[i].sigma_norm > 0.0)) continue;
        Var tail = tape.sum(tape.abs(tape.slice1d(l.sigma, tau, r)));
        accumulate(tape, acc, tape.scale(tail, 1.0 / ((r - tau) * stats[i].sigma_norm)));
    }
    return finish_average(tape, acc, layers.size());
}

Var ablation_reg(Tape& tape, const std::vector<LayerVars>& layers, RegMode mode, double delta) {
    if (layers.empty()) throw_error(ErrorKind::usage, "ablation_reg: at least one layer required");
    if (mode != RegMode::l1 && mode != RegMode::l2 && mode != RegMode::funnel)
        throw_error(ErrorKind::config, "ablation_reg: mode must be l1, l2, or funnel");
    if (mode == RegMode::funnel && !(delta > 0.0)) throw_error(ErrorKind::config, "ablation_reg: delta must be positive");
    std::optional<Var> acc;
    for (const auto& l : layers) {
        int r = tape.value(l.sigma).shape[0];
        Var raw;
        if (mode == RegMode::l1)
            raw = tape.sum(tape.abs(l.sigma));
        else if (mode == RegMode::l2)
            raw = tape.l2_norm(l.sigma);
        else
            raw = tape.sum(tape.funnel(l.sigma, delta));
        accumulate(tape, acc, tape.scale(raw, 1.0 / r));
    }
    return finish_average(tape, acc, layers.size());
}

Var total_loss(Tape& tape, Var app, const std::vector<LayerVars>& layers, const LossConfig& cfg,
               const std::vector<CompStats>& comp_stats, LossBreakdown* breakdown) {
    cfg.validate();
    LossBreakdown bd;
    bd.app = tape.value(app).data[0];
    Var total = app;
    if (cfg.mode == RegMode::proposed) {
        std::optional<Var> structure;
        if (cfg.lambda_str > 0.0 && cfg.mu_orth > 0.0) {
            Var o = orth_loss(tape, layers);
            bd.orth = tape.value(o).data[0];
            accumulate(tape, structure, tape.scale(o, cfg.mu_orth));
        }
        if (cfg.lambda_str > 0.0 && cfg.mu_sort > 0.0) {
            std::vector<SortStats> stats;
            stats.reserve(layers.size());
            for (const auto& l : layers) stats.push_back(sort_stats(tape.value(l.sigma)));
            Var s = sort_loss(tape, layers, stats);
            bd.sort = tape.value(s).data[0];
            accumulate(tape, structure, tape.scale(s, cfg.mu_sort));
        }
        if (structure) total = tape.add(total, tape.scale(*structure, cfg.lambda_str));
        if (cfg.lambda_comp > 0.0) {
            Var c = comp_loss(tape, layers, comp_stats);
            bd.comp = tape.value(c).data[0];
            total = tape.add(total, tape.scale(c, cfg.lambda_comp));
        }
    } else if (cfg.mode != RegMode::none) {
        if (cfg.lambda_reg > 0.0) {
            Var reg = ablation_reg(tape, layers, cfg.mode, cfg.delta);
            bd.reg = tape.value(reg).data[0];
            total = tape.add(total, tape.scale(reg, cfg.lambda_reg));
        }
    }
    bd.total = tape.value(total).data[0];
    if (breakdown) *breakdown = bd;
    return total;
}

}  // namespace dprp
