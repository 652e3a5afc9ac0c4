#pragma once

#include "lsm/model_config.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace lsm {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace lsm

namespace lsm::detail {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// j.at(key) with an invalid-config error naming the missing field.
const json& require(const json& j, const char* key);

}  // namespace lsm::detail
