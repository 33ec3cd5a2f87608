#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dprp/rng.hpp"
#include "dprp/tensor.hpp"

namespace dprp {

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> std_dev;
};

struct LabeledImageSet {
    Tensor images;            // [N, C, H, W], standardized per channel
    std::vector<int> labels;  // class index per image
    int n_c = 0;
    ChannelStats stats;  // the standardization that was applied to images

    int size() const { return images.rank() == 4 ? images.shape[0] : 0; }
};

// Standardizes images per channel in place and returns the stats used.
// A channel with zero spread keeps its values and reports std 1.
ChannelStats standardize(Tensor& images);
void apply_stats(Tensor& images, const ChannelStats& stats);

// CIFAR-10 binary records: 1 label byte followed by 3x32x32 planar RGB
// bytes. Pixels scale to [0,1] and are then standardized, with `stats` when
// given and from the loaded data otherwise. limit_per_class > 0 keeps the
// first that many records of each class, scanning files in the given order.
LabeledImageSet load_cifar10(const std::vector<std::string>& paths, int limit_per_class = 0,
                             const ChannelStats* stats = nullptr);

// Deterministic 3-channel classification set: each class has a smooth cosine
// template with unit spread per channel; samples add Gaussian noise with the
// given standard deviation. Sample i gets class i % n_c, except that a
// label_noise fraction of samples is relabeled to a random other class.
LabeledImageSet gen_synthetic(int n_c, int per_class, int hw, uint64_t seed,
                              const ChannelStats* stats = nullptr, double noise = 1.0 / 3.0,
                              double label_noise = 0.0);

// Splits off the last holdout_n records into the second set.
std::pair<LabeledImageSet, LabeledImageSet> split_holdout(const LabeledImageSet& set, int holdout_n);

// Horizontal flip with probability one half plus a random crop out of a
// zero-padded copy, per image.
Tensor augment_batch(const Tensor& images, Rng& rng, int pad = 4);

}  // namespace dprp
