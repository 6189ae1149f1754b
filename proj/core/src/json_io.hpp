#pragma once

// JSON conversions shared by the checkpoint footer and run configs. Private
// to the library so that installed headers do not depend on nlohmann/json.

#include <string>
#include <vector>

#include <json.hpp>

#include "vivit/model_config.hpp"

namespace vivit::detail {

using ordered_json = nlohmann::ordered_json;

ordered_json model_config_to_json(const ModelConfig& config);

// Reads known fields over `base`; unknown keys and type errors are appended
// to `errors` with their path.
ModelConfig model_config_from_json(const nlohmann::json& doc, const ModelConfig& base,
                                   std::vector<std::string>& errors, const std::string& path = "model");

}  // namespace vivit::detail
