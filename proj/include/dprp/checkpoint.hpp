#pragma once

#include <string>
#include <vector>

#include "dprp/data.hpp"
#include "dprp/losses.hpp"
#include "dprp/model.hpp"
#include "dprp/optimizer.hpp"
#include "dprp/rng.hpp"
#include "dprp/tensor.hpp"

namespace dprp {

// A checkpoint directory holds manifest.json (schema, configs, epoch, ranks,
// RNG state, normalization stats and a tensor table with byte offsets) plus
// params.bin, one little-endian blob per named parameter followed by one per
// momentum buffer. Blob precision follows the active precision mode, so a
// reload resumes bitwise identically. initial_sigmas, when given, records the
// singular values the run started from (one vector per factorized layer).
void save_checkpoint(const std::string& dir, Model& model, const SgdState& opt,
                     const PlateauState& plateau, const Rng& rng, const LossConfig& loss,
                     const SgdConfig& sgd, const ChannelStats& stats, int epoch,
                     const std::vector<std::vector<double>>* initial_sigmas = nullptr);

struct LoadedCheckpoint {
    Model model;
    SgdState opt;
    PlateauState plateau;
    Rng rng;
    LossConfig loss;
    SgdConfig sgd;
    ChannelStats stats;
    int epoch = 0;
    Precision precision = Precision::f32;
    std::vector<std::vector<double>> initial_sigmas;  // empty when the manifest has none

    explicit LoadedCheckpoint(Model m) : model(std::move(m)) {}
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace dprp
