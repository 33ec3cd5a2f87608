#pragma once

#include <initializer_list>
#include <string>

#include "dprp/losses.hpp"
#include "dprp/model.hpp"
#include "dprp/optimizer.hpp"
#include "json.hpp"

namespace dprp {

// Schema helpers shared by the config parser and the checkpoint manifest.
// All of them throw config errors naming the offending key and context.

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx);
double json_num(const nlohmann::json& j, const char* key, double fallback, const std::string& ctx);
int json_int(const nlohmann::json& j, const char* key, int fallback, const std::string& ctx);
int json_int_required(const nlohmann::json& j, const char* key, const std::string& ctx);
bool json_bool(const nlohmann::json& j, const char* key, bool fallback, const std::string& ctx);
std::string json_str(const nlohmann::json& j, const char* key, const std::string& fallback,
                     const std::string& ctx);

nlohmann::json arch_to_json(const Architecture& arch);
Architecture arch_from_json(const nlohmann::json& j);

nlohmann::json loss_to_json(const LossConfig& cfg);
LossConfig loss_from_json(const nlohmann::json& j, const LossConfig& base = LossConfig{});

nlohmann::json sgd_to_json(const SgdConfig& cfg);
SgdConfig sgd_from_json(const nlohmann::json& j, const SgdConfig& base = SgdConfig{});

}  // namespace dprp
