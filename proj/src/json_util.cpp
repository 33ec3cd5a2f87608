#include "json_util.hpp"

#include "dprp/error.hpp"

namespace dprp {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
    if (!j.is_object()) throw_error(ErrorKind::config, ctx + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                known = true;
                break;
            }
        if (!known) throw_error(ErrorKind::config, ctx + ": unknown key '" + it.key() + "'");
    }
}

namespace {

const nlohmann::json* find_key(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

}  // namespace

double json_num(const nlohmann::json& j, const char* key, double fallback, const std::string& ctx) {
    const nlohmann::json* v = find_key(j, key);
    if (!v) return fallback;
    if (!v->is_number()) throw_error(ErrorKind::config, ctx + ": '" + key + "' must be a number");
    return v->get<double>();
}

int json_int(const nlohmann::json& j, const char* key, int fallback, const std::string& ctx) {
    const nlohmann::json* v = find_key(j, key);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw_error(ErrorKind::config, ctx + ": '" + key + "' must be an integer");
    return v->get<int>();
}

int json_int_required(const nlohmann::json& j, const char* key, const std::string& ctx) {
    const nlohmann::json* v = find_key(j, key);
    if (!v) throw_error(ErrorKind::config, ctx + ": missing required key '" + key + "'");
    if (!v->is_number_integer()) throw_error(ErrorKind::config, ctx + ": '" + key + "' must be an integer");
    return v->get<int>();
}

bool json_bool(const nlohmann::json& j, const char* key, bool fallback, const std::string& ctx) {
    const nlohmann::json* v = find_key(j, key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw_error(ErrorKind::config, ctx + ": '" + key + "' must be a boolean");
    return v->get<bool>();
}

std::string json_str(const nlohmann::json& j, const char* key, const std::string& fallback,
                     const std::string& ctx) {
    const nlohmann::json* v = find_key(j, key);
    if (!v) return fallback;
    if (!v->is_string()) throw_error(ErrorKind::config, ctx + ": '" + key + "' must be a string");
    return v->get<std::string>();
}

nlohmann::json arch_to_json(const Architecture& arch) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const ArchNode& node : arch.nodes) {
        nlohmann::json n;
        switch (node.kind) {
            case NodeKind::layer:
                if (node.layer.kind == LayerKind::conv) {
                    n["kind"] = "conv";
                    n["S"] = node.layer.conv.S;
                    n["C"] = node.layer.conv.C;
                    n["L1"] = node.layer.conv.L1;
                    n["L2"] = node.layer.conv.L2;
                    n["pad"] = node.layer.conv.p;
                    n["stride"] = node.layer.conv.s;
                } else {
                    n["kind"] = "fc";
                    n["D1"] = node.layer.fc.D1;
                    n["D2"] = node.layer.fc.D2;
                }
                n["factorized"] = node.layer.factorized;
                n["relu"] = node.layer.relu;
                n["bias"] = node.layer.bias;
                break;
            case NodeKind::avg_pool:
                n["kind"] = "avg_pool";
                n["k"] = node.pool_k;
                break;
            case NodeKind::global_avg_pool:
                n["kind"] = "global_avg_pool";
                break;
        }
        nodes.push_back(std::move(n));
    }
    return nlohmann::json{{"name", arch.name},
                          {"in_channels", arch.in_channels},
                          {"in_h", arch.in_h},
                          {"in_w", arch.in_w},
                          {"n_classes", arch.n_classes},
                          {"nodes", std::move(nodes)}};
}

Architecture arch_from_json(const nlohmann::json& j) {
    const std::string ctx = "architecture";
    check_keys(j, {"name", "in_channels", "in_h", "in_w", "n_classes", "nodes"}, ctx);
    Architecture arch;
    arch.name = json_str(j, "name", "custom", ctx);
    arch.in_channels = json_int_required(j, "in_channels", ctx);
    arch.in_h = json_int_required(j, "in_h", ctx);
    arch.in_w = json_int_required(j, "in_w", ctx);
    arch.n_classes = json_int_required(j, "n_classes", ctx);
    const nlohmann::json* nodes = j.contains("nodes") ? &j.at("nodes") : nullptr;
    if (!nodes || !nodes->is_array())
        throw_error(ErrorKind::config, ctx + ": 'nodes' must be an array");
    for (size_t i = 0; i < nodes->size(); ++i) {
        const nlohmann::json& n = (*nodes)[i];
        std::string nctx = ctx + ".nodes[" + std::to_string(i) + "]";
        std::string kind = json_str(n, "kind", "", nctx);
        ArchNode node;
        if (kind == "conv") {
            check_keys(n, {"kind", "S", "C", "L1", "L2", "pad", "stride", "factorized", "relu", "bias"},
                       nctx);
            node.kind = NodeKind::layer;
            node.layer.kind = LayerKind::conv;
            node.layer.conv.S = json_int_required(n, "S", nctx);
            node.layer.conv.C = json_int_required(n, "C", nctx);
            node.layer.conv.L1 = json_int_required(n, "L1", nctx);
            node.layer.conv.L2 = json_int_required(n, "L2", nctx);
            node.layer.conv.p = json_int(n, "pad", 0, nctx);
            node.layer.conv.s = json_int(n, "stride", 1, nctx);
            node.layer.factorized = json_bool(n, "factorized", true, nctx);
            node.layer.relu = json_bool(n, "relu", false, nctx);
            node.layer.bias = json_bool(n, "bias", true, nctx);
        } else if (kind == "fc") {
            check_keys(n, {"kind", "D1", "D2", "factorized", "relu", "bias"}, nctx);
            node.kind = NodeKind::layer;
            node.layer.kind = LayerKind::fc;
            node.layer.fc.D1 = json_int_required(n, "D1", nctx);
            node.layer.fc.D2 = json_int_required(n, "D2", nctx);
            node.layer.factorized = json_bool(n, "factorized", true, nctx);
            node.layer.relu = json_bool(n, "relu", false, nctx);
            node.layer.bias = json_bool(n, "bias", true, nctx);
        } else if (kind == "avg_pool") {
            check_keys(n, {"kind", "k"}, nctx);
            node.kind = NodeKind::avg_pool;
            node.pool_k = json_int(n, "k", 2, nctx);
        } else if (kind == "global_avg_pool") {
            check_keys(n, {"kind"}, nctx);
            node.kind = NodeKind::global_avg_pool;
        } else {
            throw_error(ErrorKind::config, nctx + ": unknown node kind '" + kind + "'");
        }
        arch.nodes.push_back(node);
    }
    arch.validate();
    return arch;
}

nlohmann::json loss_to_json(const LossConfig& cfg) {
    return nlohmann::json{{"lambda_str", cfg.lambda_str}, {"lambda_comp", cfg.lambda_comp},
                          {"mu_orth", cfg.mu_orth},       {"mu_sort", cfg.mu_sort},
                          {"epsilon", cfg.epsilon},       {"mode", reg_mode_to_string(cfg.mode)},
                          {"lambda_reg", cfg.lambda_reg}, {"delta", cfg.delta}};
}

LossConfig loss_from_json(const nlohmann::json& j, const LossConfig& base) {
    const std::string ctx = "loss";
    check_keys(j, {"lambda_str", "lambda_comp", "mu_orth", "mu_sort", "epsilon", "mode", "lambda_reg",
                   "delta"},
               ctx);
    LossConfig cfg = base;
    cfg.lambda_str = json_num(j, "lambda_str", cfg.lambda_str, ctx);
    cfg.lambda_comp = json_num(j, "lambda_comp", cfg.lambda_comp, ctx);
    cfg.mu_orth = json_num(j, "mu_orth", cfg.mu_orth, ctx);
    cfg.mu_sort = json_num(j, "mu_sort", cfg.mu_sort, ctx);
    cfg.epsilon = json_num(j, "epsilon", cfg.epsilon, ctx);
    cfg.mode = reg_mode_from_string(json_str(j, "mode", reg_mode_to_string(cfg.mode), ctx));
    cfg.lambda_reg = json_num(j, "lambda_reg", cfg.lambda_reg, ctx);
    cfg.delta = json_num(j, "delta", cfg.delta, ctx);
    cfg.validate();
    return cfg;
}

nlohmann::json sgd_to_json(const SgdConfig& cfg) {
    return nlohmann::json{{"lr", cfg.lr},
                          {"momentum", cfg.momentum},
                          {"weight_decay", cfg.weight_decay},
                          {"batch_size", cfg.batch_size},
                          {"max_epochs", cfg.max_epochs},
                          {"seed", cfg.seed}};
}

SgdConfig sgd_from_json(const nlohmann::json& j, const SgdConfig& base) {
    const std::string ctx = "sgd";
    check_keys(j, {"lr", "momentum", "weight_decay", "batch_size", "max_epochs", "seed"}, ctx);
    SgdConfig cfg = base;
    cfg.lr = json_num(j, "lr", cfg.lr, ctx);
    cfg.momentum = json_num(j, "momentum", cfg.momentum, ctx);
    cfg.weight_decay = json_num(j, "weight_decay", cfg.weight_decay, ctx);
    cfg.batch_size = json_int(j, "batch_size", cfg.batch_size, ctx);
    cfg.max_epochs = json_int(j, "max_epochs", cfg.max_epochs, ctx);
    const nlohmann::json* seed = j.contains("seed") ? &j.at("seed") : nullptr;
    if (seed) {
        if (!seed->is_number_integer() || seed->get<long long>() < 0)
            throw_error(ErrorKind::config, ctx + ": 'seed' must be a non-negative integer");
        cfg.seed = seed->get<uint64_t>();
    }
    cfg.validate();
    return cfg;
}

}  // namespace dprp
