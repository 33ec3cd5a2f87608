#pragma once

#include <limits>
#include <vector>

#include "dprp/model.hpp"
#include "dprp/tensor.hpp"

namespace dprp {

struct SgdConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch_size = 32;
    int max_epochs = 60;
    unsigned long long seed = 1;

    void validate() const;
};

// Momentum buffers aligned one-to-one with a fixed parameter list, plus the
// current learning rate (the schedule lowers it between epochs).
struct SgdState {
    std::vector<Tensor> velocity;
    double lr = 0.1;

    void init(const std::vector<NamedTensor>& params, const SgdConfig& cfg);
};

// g = grad + wd * p; v = momentum * v + g; p -= lr * v. Weight decay applies
// to every trainable tensor uniformly.
void sgd_step(const std::vector<NamedTensor>& params, const std::vector<Tensor>& grads,
              SgdState& state, const SgdConfig& cfg);

// Reduce-on-plateau bookkeeping, fed the mean classification loss each epoch.
struct PlateauState {
    double best = std::numeric_limits<double>::infinity();
    int stalled = 0;  // epochs since the last improvement
    double factor = 0.1;
    int patience = 10;
    double min_lr = 1e-5;
    double tol = 1e-8;
};

// Improvement means loss < best - tol. After more than `patience` epochs
// without one, multiplies state.lr by `factor` (never below min_lr) and
// restarts the count. Returns the current rate.
double plateau_step(PlateauState& plateau, SgdState& state, double loss);

}  // namespace dprp
