#include "dprp/pruning.hpp"

#include <cmath>
#include <string>

#include "dprp/model.hpp"
#include "dprp/optimizer.hpp"

namespace dprp {

int compute_tau(const Tensor& sigma, double epsilon) {
    if (sigma.rank() != 1 || sigma.shape[0] < 1) throw_error(ErrorKind::usage, "compute_tau: non-empty sigma vector required");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw_error(ErrorKind::config, "compute_tau: epsilon must lie in (0,1), got " + std::to_string(epsilon));
    int r = sigma.shape[0];
    for (int i = 0; i + 1 < r; ++i) {
        double head = std::fabs(sigma.data[static_cast<size_t>(i)]);
        double next = std::fabs(sigma.data[static_cast<size_t>(i + 1)]);
        if (!(next > epsilon * head)) return i + 1;
    }
    return r;
}

namespace {

Tensor take_cols(const Tensor& m, int k) {
    Tensor out({m.shape[0], k});
    for (int i = 0; i < m.shape[0]; ++i)
        for (int j = 0; j < k; ++j) out(i, j) = m(i, j);
    return out;
}

Tensor take_head(const Tensor& v, int k) {
    Tensor out({k});
    for (int i = 0; i < k; ++i) out(i) = v(i);
    return out;
}

}  // namespace

std::optional<PruneEvent> truncate(FactorizedParam& param, int tau, const MomentumRefs& momentum) {
    if (tau < 1 || tau > param.r)
        throw_error(ErrorKind::usage, "truncate: tau " + std::to_string(tau) + " out of range [1," +
                                          std::to_string(param.r) + "]");
    if (tau == param.r) return std::nullopt;

    PruneEvent ev;
    ev.rank_before = param.r;
    ev.rank_after = tau;
    for (int i = tau; i < param.r; ++i) ev.removed_sigma.push_back(param.sigma(i));
    ev.params_removed = static_cast<long long>(param.r - tau) * (param.h + param.w + 1);

    param.U = take_cols(param.U, tau);
    param.V = take_cols(param.V, tau);
    param.sigma = take_head(param.sigma, tau);
    param.r = tau;
    if (momentum.U) *momentum.U = take_cols(*momentum.U, tau);
    if (momentum.V) *momentum.V = take_cols(*momentum.V, tau);
    if (momentum.sigma) *momentum.sigma = take_head(*momentum.sigma, tau);
    return ev;
}

std::vector<PruneEvent> prune_step(Model& model, SgdState& opt, const LossConfig& cfg, int epoch) {
    std::vector<PruneEvent> events;
    size_t cursor = 0;  // walks opt.velocity in named_parameters order
    for (size_t li = 0; li < model.layers().size(); ++li) {
        ModelLayer& layer = model.layers()[li];
        if (!layer.spec.factorized) {
            cursor += 1 + (layer.dense.bias ? 1 : 0);
            continue;
        }
        size_t base = cursor;
        cursor += 3 + (layer.fact.bias ? 1 : 0);
        if (cursor > opt.velocity.size())
            throw_error(ErrorKind::usage, "prune_step: momentum buffers do not cover the model");
        int tau = compute_tau(layer.fact.sigma, cfg.epsilon);
        MomentumRefs momentum{&opt.velocity[base], &opt.velocity[base + 1], &opt.velocity[base + 2]};
        std::optional<PruneEvent> ev = truncate(layer.fact, tau, momentum);
        if (ev) {
            ev->epoch = epoch;
            ev->layer = static_cast<int>(li);
            events.push_back(std::move(*ev));
        }
    }
    return events;
}

}  // namespace dprp
