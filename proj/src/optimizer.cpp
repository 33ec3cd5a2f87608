#include "dprp/optimizer.hpp"

#include <algorithm>
#include <string>

#include "dprp/error.hpp"

namespace dprp {

void SgdConfig::validate() const {
    if (!(lr > 0.0))
        throw_error(ErrorKind::config, "sgd: learning rate must be positive, got " + std::to_string(lr));
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw_error(ErrorKind::config, "sgd: momentum must lie in [0, 1), got " + std::to_string(momentum));
    if (!(weight_decay >= 0.0))
        throw_error(ErrorKind::config,
                    "sgd: weight decay must be non-negative, got " + std::to_string(weight_decay));
    if (batch_size < 1)
        throw_error(ErrorKind::config, "sgd: batch size must be positive, got " + std::to_string(batch_size));
    if (max_epochs < 1)
        throw_error(ErrorKind::config, "sgd: max epochs must be positive, got " + std::to_string(max_epochs));
}

void SgdState::init(const std::vector<NamedTensor>& params, const SgdConfig& cfg) {
    cfg.validate();
    lr = cfg.lr;
    velocity.clear();
    velocity.reserve(params.size());
    for (const NamedTensor& p : params) velocity.push_back(Tensor(p.tensor->shape));
}

void sgd_step(const std::vector<NamedTensor>& params, const std::vector<Tensor>& grads,
              SgdState& state, const SgdConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.velocity.size())
        throw_error(ErrorKind::usage, "sgd_step: " + std::to_string(params.size()) + " params, " +
                                          std::to_string(grads.size()) + " grads, " +
                                          std::to_string(state.velocity.size()) + " momentum buffers");
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].tensor;
        const Tensor& g = grads[i];
        Tensor& v = state.velocity[i];
        if (!p.same_shape(g) || !p.same_shape(v))
            throw_error(ErrorKind::dimension, "sgd_step: shape mismatch for " + params[i].name + ": param " +
                                                  shape_str(p.shape) + ", grad " + shape_str(g.shape) +
                                                  ", momentum " + shape_str(v.shape));
        for (size_t j = 0; j < p.data.size(); ++j) {
            double step_g = g.data[j] + cfg.weight_decay * p.data[j];
            v.data[j] = cfg.momentum * v.data[j] + step_g;
            p.data[j] -= state.lr * v.data[j];
        }
        quantize_inplace(v);
        quantize_inplace(p);
    }
}

double plateau_step(PlateauState& plateau, SgdState& state, double loss) {
    if (loss < plateau.best - plateau.tol) {
        plateau.best = loss;
        plateau.stalled = 0;
    } else {
        ++plateau.stalled;
        if (plateau.stalled > plateau.patience) {
            state.lr = std::max(state.lr * plateau.factor, plateau.min_lr);
            plateau.stalled = 0;
        }
    }
    return state.lr;
}

}  // namespace dprp
