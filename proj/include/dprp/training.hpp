#pragma once

#include <string>
#include <vector>

#include "dprp/data.hpp"
#include "dprp/losses.hpp"
#include "dprp/model.hpp"
#include "dprp/optimizer.hpp"
#include "dprp/pruning.hpp"

namespace dprp {

// One epoch's results. Losses are means over the epoch's minibatches; ranks,
// sigma snapshots and the accounting totals are taken after the epoch's prune
// step, so `params` always agrees with the counting formulas at that rank.
struct EpochRecord {
    int epoch = 0;  // 1-based
    LossBreakdown losses;
    double lr = 0.0;  // rate the epoch's updates used
    std::vector<int> ranks;
    std::vector<std::vector<double>> sigmas;  // one snapshot per factorized layer
    long long params = 0;
    long long macs = 0;
    double top1 = 0.0;  // held-out accuracy, 0 when no holdout was given
    std::vector<PruneEvent> events;
};

struct FitConfig {
    SgdConfig sgd;
    LossConfig loss;
    PlateauState plateau;  // counters start fresh; the knobs seed the schedule
    bool augment = false;
    int augment_pad = 4;
    std::string checkpoint_dir;  // empty disables checkpointing
    int checkpoint_every = 0;    // when > 0, also write every k epochs
};

// Mutable training state threaded through fit. Restoring this struct from a
// checkpoint and calling fit again continues the run bitwise.
struct TrainState {
    SgdState opt;
    PlateauState plateau;
    Rng rng;
    int epoch = 0;  // epochs completed so far
};

TrainState init_train_state(Model& model, const FitConfig& cfg);

struct FitResult {
    std::vector<EpochRecord> records;  // one per epoch this call ran
    std::vector<int> initial_ranks;    // state at entry, for epoch-0 exports
    std::vector<std::vector<double>> initial_sigmas;
    long long initial_params = 0;
    long long initial_macs = 0;
};

// Fraction of samples whose label is among the k largest logits, evaluated
// in minibatches.
double evaluate(const Model& model, const LabeledImageSet& set, int k = 1);

// Runs epochs state.epoch+1 .. cfg.sgd.max_epochs. Per epoch: seeded shuffle,
// minibatch loop {forward, total loss, backward, sgd step}, prune step,
// plateau step on the mean classification loss, holdout evaluation, record.
// Checkpoints land in cfg.checkpoint_dir after the final epoch and every
// checkpoint_every epochs. A non-finite op value aborts with a numeric error
// naming the op.
FitResult fit(Model& model, TrainState& state, const LabeledImageSet& train,
              const LabeledImageSet& holdout, const FitConfig& cfg);

}  // namespace dprp
