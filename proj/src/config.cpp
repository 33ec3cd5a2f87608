#include "dprp/config.hpp"

#include <fstream>
#include <sstream>

#include "dprp/data.hpp"
#include "dprp/error.hpp"
#include "json_util.hpp"

namespace dprp {

namespace {

PlateauState plateau_knobs_from_json(const nlohmann::json& j, PlateauState base) {
    const std::string ctx = "plateau";
    check_keys(j, {"factor", "patience", "min_lr", "tol"}, ctx);
    base.factor = json_num(j, "factor", base.factor, ctx);
    base.patience = json_int(j, "patience", base.patience, ctx);
    base.min_lr = json_num(j, "min_lr", base.min_lr, ctx);
    base.tol = json_num(j, "tol", base.tol, ctx);
    return base;
}

DataConfig data_from_json(const nlohmann::json& j, DataConfig base) {
    const std::string ctx = "data";
    check_keys(j,
               {"source", "classes", "per_class", "image_size", "seed", "noise", "label_noise",
                "files", "limit_per_class", "holdout"},
               ctx);
    base.source = json_str(j, "source", base.source, ctx);
    base.classes = json_int(j, "classes", base.classes, ctx);
    base.per_class = json_int(j, "per_class", base.per_class, ctx);
    base.image_size = json_int(j, "image_size", base.image_size, ctx);
    if (j.contains("seed")) {
        const nlohmann::json& s = j.at("seed");
        if (!s.is_number_integer() || s.get<long long>() < 0)
            throw_error(ErrorKind::config, ctx + ": 'seed' must be a non-negative integer");
        base.seed = s.get<uint64_t>();
    }
    base.noise = json_num(j, "noise", base.noise, ctx);
    base.label_noise = json_num(j, "label_noise", base.label_noise, ctx);
    if (j.contains("files")) {
        const nlohmann::json& f = j.at("files");
        if (!f.is_array()) throw_error(ErrorKind::config, ctx + ": 'files' must be an array");
        base.files.clear();
        for (const nlohmann::json& e : f) {
            if (!e.is_string())
                throw_error(ErrorKind::config, ctx + ": 'files' entries must be strings");
            base.files.push_back(e.get<std::string>());
        }
    }
    base.limit_per_class = json_int(j, "limit_per_class", base.limit_per_class, ctx);
    base.holdout = json_int(j, "holdout", base.holdout, ctx);
    return base;
}

nlohmann::json data_to_json(const DataConfig& cfg) {
    nlohmann::json j{{"source", cfg.source},       {"classes", cfg.classes},
                     {"per_class", cfg.per_class}, {"image_size", cfg.image_size},
                     {"seed", cfg.seed},           {"noise", cfg.noise},
                     {"label_noise", cfg.label_noise}, {"limit_per_class", cfg.limit_per_class},
                     {"holdout", cfg.holdout}};
    j["files"] = cfg.files;
    return j;
}

}  // namespace

void DataConfig::validate() const {
    if (source != "synthetic" && source != "cifar10")
        throw_error(ErrorKind::config, "data: unknown source '" + source + "'");
    if (source == "synthetic") {
        if (classes < 2) throw_error(ErrorKind::config, "data: 'classes' must be at least 2");
        if (per_class < 1) throw_error(ErrorKind::config, "data: 'per_class' must be positive");
        if (image_size < 1) throw_error(ErrorKind::config, "data: 'image_size' must be positive");
        if (!(noise >= 0.0)) throw_error(ErrorKind::config, "data: 'noise' must be non-negative");
        if (!(label_noise >= 0.0 && label_noise < 1.0))
            throw_error(ErrorKind::config, "data: 'label_noise' must lie in [0, 1)");
    } else {
        if (files.empty()) throw_error(ErrorKind::config, "data: 'files' must list at least one path");
        if (limit_per_class < 0)
            throw_error(ErrorKind::config, "data: 'limit_per_class' must be non-negative");
    }
    if (holdout < 0) throw_error(ErrorKind::config, "data: 'holdout' must be non-negative");
}

void RunConfig::validate() const {
    data.validate();
    if (architecture != "desk" && architecture != "custom")
        throw_error(ErrorKind::config, "run config: unknown architecture '" + architecture + "'");
    if (architecture == "custom") custom.validate();
    loss.validate();
    sgd.validate();
    if (!(plateau.factor > 0.0 && plateau.factor <= 1.0))
        throw_error(ErrorKind::config, "plateau: 'factor' must lie in (0, 1]");
    if (plateau.patience < 1) throw_error(ErrorKind::config, "plateau: 'patience' must be positive");
    if (!(plateau.min_lr > 0.0)) throw_error(ErrorKind::config, "plateau: 'min_lr' must be positive");
    if (!(plateau.tol >= 0.0)) throw_error(ErrorKind::config, "plateau: 'tol' must be non-negative");
    if (augment_pad < 0) throw_error(ErrorKind::config, "run config: 'augment_pad' must be non-negative");
    if (precision != "f32" && precision != "f64")
        throw_error(ErrorKind::config, "run config: 'precision' must be \"f32\" or \"f64\"");
    if (out_dir.empty()) throw_error(ErrorKind::config, "run config: 'out_dir' must not be empty");
    if (report_every < 1) throw_error(ErrorKind::config, "run config: 'report_every' must be positive");
    if (checkpoint_every < 0)
        throw_error(ErrorKind::config, "run config: 'checkpoint_every' must be non-negative");
    if (modes.empty()) throw_error(ErrorKind::config, "run config: 'modes' must not be empty");
    for (const std::string& m : modes) reg_mode_from_string(m);
}

Precision RunConfig::precision_mode() const {
    return precision == "f32" ? Precision::f32 : Precision::f64;
}

std::vector<std::string> preset_names() {
    return {"cifar10-resnet20", "cifar10-resnet32", "cifar100-resnet20",
            "cifar100-resnet32", "imagenet-resnet18", "ablation", "desk"};
}

void apply_preset(RunConfig& cfg, const std::string& name) {
    if (name == "cifar10-resnet20" || name == "cifar100-resnet20") {
        cfg.loss.lambda_comp = 0.1;
        cfg.loss.epsilon = 0.1;
    } else if (name == "cifar10-resnet32" || name == "imagenet-resnet18") {
        cfg.loss.lambda_comp = 0.5;
        cfg.loss.epsilon = 0.001;
    } else if (name == "cifar100-resnet32") {
        cfg.loss.lambda_comp = 1.0;
        cfg.loss.epsilon = 0.001;
    } else if (name == "ablation") {
        cfg.loss.lambda_reg = 0.1;
        cfg.loss.epsilon = 0.001;
    } else if (name == "desk") {
        cfg.data = DataConfig{};
        cfg.data.label_noise = 0.1;
        cfg.data.holdout = 400;
        cfg.architecture = "desk";
        cfg.sgd.lr = 0.03;
        cfg.sgd.momentum = 0.9;
        cfg.sgd.weight_decay = 0.0075;
        cfg.sgd.batch_size = 32;
        cfg.sgd.max_epochs = 64;
        cfg.sgd.seed = 3;
        cfg.loss.mode = RegMode::proposed;
        cfg.loss.lambda_str = 1.0;
        cfg.loss.mu_orth = 10.0;
        cfg.loss.mu_sort = 1.0;
        cfg.loss.lambda_comp = 0.1;
        cfg.loss.epsilon = 0.1;
        cfg.plateau.patience = 100;
        cfg.augment = true;
        cfg.augment_pad = 4;
        cfg.precision = "f32";
    } else {
        std::string known;
        for (const std::string& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw_error(ErrorKind::config, "run config: unknown preset '" + name + "' (known: " + known + ")");
    }
}

RunConfig parse_run_config(const std::string& text) {
    const std::string ctx = "run config";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorKind::config, ctx + ": " + e.what());
    }
    if (!j.is_object()) throw_error(ErrorKind::config, ctx + ": expected a JSON object");
    check_keys(j,
               {"preset", "data", "architecture", "loss", "sgd", "plateau", "augment", "augment_pad",
                "precision", "out_dir", "report_every", "checkpoint_every", "modes"},
               ctx);

    RunConfig cfg;
    std::string preset = json_str(j, "preset", "", ctx);
    if (!preset.empty()) apply_preset(cfg, preset);

    if (j.contains("data")) cfg.data = data_from_json(j.at("data"), cfg.data);
    if (j.contains("architecture")) {
        const nlohmann::json& a = j.at("architecture");
        if (a.is_string()) {
            cfg.architecture = a.get<std::string>();
        } else if (a.is_object()) {
            cfg.architecture = "custom";
            cfg.custom = arch_from_json(a);
        } else {
            throw_error(ErrorKind::config, ctx + ": 'architecture' must be a string or an object");
        }
    }
    if (j.contains("loss")) cfg.loss = loss_from_json(j.at("loss"), cfg.loss);
    if (j.contains("sgd")) cfg.sgd = sgd_from_json(j.at("sgd"), cfg.sgd);
    if (j.contains("plateau")) cfg.plateau = plateau_knobs_from_json(j.at("plateau"), cfg.plateau);
    cfg.augment = json_bool(j, "augment", cfg.augment, ctx);
    cfg.augment_pad = json_int(j, "augment_pad", cfg.augment_pad, ctx);
    cfg.precision = json_str(j, "precision", cfg.precision, ctx);
    cfg.out_dir = json_str(j, "out_dir", cfg.out_dir, ctx);
    cfg.report_every = json_int(j, "report_every", cfg.report_every, ctx);
    cfg.checkpoint_every = json_int(j, "checkpoint_every", cfg.checkpoint_every, ctx);
    if (j.contains("modes")) {
        const nlohmann::json& m = j.at("modes");
        if (!m.is_array()) throw_error(ErrorKind::config, ctx + ": 'modes' must be an array");
        cfg.modes.clear();
        for (const nlohmann::json& e : m) {
            if (!e.is_string())
                throw_error(ErrorKind::config, ctx + ": 'modes' entries must be strings");
            cfg.modes.push_back(e.get<std::string>());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_error(ErrorKind::input, "run config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j{{"data", data_to_json(cfg.data)},
                     {"loss", loss_to_json(cfg.loss)},
                     {"sgd", sgd_to_json(cfg.sgd)},
                     {"plateau",
                      {{"factor", cfg.plateau.factor},
                       {"patience", cfg.plateau.patience},
                       {"min_lr", cfg.plateau.min_lr},
                       {"tol", cfg.plateau.tol}}},
                     {"augment", cfg.augment},
                     {"augment_pad", cfg.augment_pad},
                     {"precision", cfg.precision},
                     {"out_dir", cfg.out_dir},
                     {"report_every", cfg.report_every},
                     {"checkpoint_every", cfg.checkpoint_every},
                     {"modes", cfg.modes}};
    if (cfg.architecture == "custom")
        j["architecture"] = arch_to_json(cfg.custom);
    else
        j["architecture"] = cfg.architecture;
    return j.dump(2) + "\n";
}

std::pair<LabeledImageSet, LabeledImageSet> load_dataset(const DataConfig& cfg,
                                                         const ChannelStats* stats) {
    cfg.validate();
    LabeledImageSet set = cfg.source == "synthetic"
                              ? gen_synthetic(cfg.classes, cfg.per_class, cfg.image_size, cfg.seed,
                                              stats, cfg.noise, cfg.label_noise)
                              : load_cifar10(cfg.files, cfg.limit_per_class, stats);
    if (cfg.holdout > 0) return split_holdout(set, cfg.holdout);
    LabeledImageSet empty;
    empty.n_c = set.n_c;
    empty.stats = set.stats;
    return {std::move(set), std::move(empty)};
}

Architecture resolve_architecture(const RunConfig& cfg, const LabeledImageSet& set) {
    if (cfg.architecture == "custom") return cfg.custom;
    if (set.images.rank() != 4)
        throw_error(ErrorKind::input, "resolve_architecture: dataset tensor must be [N,C,H,W]");
    int c = set.images.shape[1];
    int h = set.images.shape[2];
    int w = set.images.shape[3];
    if (h != w)
        throw_error(ErrorKind::config,
                    "the desk architecture needs square inputs, got " + std::to_string(h) + "x" +
                        std::to_string(w));
    return desk_architecture(set.n_c, c, h);
}

}  // namespace dprp
