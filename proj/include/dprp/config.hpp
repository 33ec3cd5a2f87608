#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dprp/losses.hpp"
#include "dprp/model.hpp"
#include "dprp/optimizer.hpp"
#include "dprp/tensor.hpp"

namespace dprp {

// Where the samples come from. The synthetic block applies when source is
// "synthetic", the file block when it is "cifar10". holdout samples are split
// off the end of the set and never trained on.
struct DataConfig {
    std::string source = "synthetic";
    int classes = 4;
    int per_class = 600;
    int image_size = 16;
    uint64_t seed = 101;
    double noise = 1.0 / 3.0;
    double label_noise = 0.0;
    std::vector<std::string> files;
    int limit_per_class = 0;  // 0 keeps every record
    int holdout = 0;

    void validate() const;
};

// One JSON document drives every command. Unknown keys are rejected so a
// typoed hyperparameter cannot silently fall back to a default.
struct RunConfig {
    DataConfig data;
    std::string architecture = "desk";  // "desk" or "custom"
    Architecture custom;                // consulted only when architecture == "custom"
    LossConfig loss;
    SgdConfig sgd;
    PlateauState plateau;  // schedule knobs; counters always start fresh
    bool augment = false;
    int augment_pad = 4;
    std::string precision = "f64";
    std::string out_dir = "out";
    int report_every = 1;     // progress line cadence; files always carry every epoch
    int checkpoint_every = 0;
    std::vector<std::string> modes = {"none", "l1", "l2", "funnel", "proposed"};  // ablate order

    void validate() const;
    Precision precision_mode() const;
};

// Named hyperparameter presets. The dataset-model rows set lambda_comp and
// epsilon; "ablation" sets the baseline regularizer weights; "desk" fills the
// whole small-scale recipe including data and schedule.
std::vector<std::string> preset_names();
void apply_preset(RunConfig& cfg, const std::string& name);

// Strict parse: defaults, then the optional "preset", then explicit fields.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Serialized form that parses back to the same settings.
std::string run_config_to_json(const RunConfig& cfg);

// Loads the configured dataset (standardized, deterministic) and splits the
// holdout off the end. The second set is empty when holdout is 0. stats, when
// given, standardizes file-based data in place of its own statistics.
std::pair<LabeledImageSet, LabeledImageSet> load_dataset(const DataConfig& cfg,
                                                         const ChannelStats* stats = nullptr);

// Resolves the architecture against the dataset: "desk" adapts the four-layer
// stack to the set's classes and geometry, "custom" returns the given one.
Architecture resolve_architecture(const RunConfig& cfg, const LabeledImageSet& set);

}  // namespace dprp
