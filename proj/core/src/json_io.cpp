#include "json_io.hpp"

#include <set>

namespace vivit::detail {

ordered_json model_config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["volume"] = {c.volume[0], c.volume[1], c.volume[2]};
  j["patch"] = c.patch;
  j["embed_dim"] = c.embed_dim;
  j["stage1_channels"] = c.stage1_channels;
  j["modality_dim"] = c.modality_dim;
  j["depth"] = c.depth;
  j["heads"] = c.heads;
  j["mlp_ratio"] = c.mlp_ratio;
  j["conv_after"] = c.conv_after;
  j["interleave_conv"] = c.interleave_conv;
  j["tokenizer"] = tokenizer_name(c.tokenizer);
  j["mae_depth"] = c.mae_depth;
  j["mae_dim"] = c.mae_dim;
  j["mae_heads"] = c.mae_heads;
  j["num_classes"] = c.num_classes;
  return j;
}

namespace {

template <typename T>
void read_field(const nlohmann::json& doc, const char* key, T& out, std::vector<std::string>& errors,
                const std::string& path) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    errors.push_back(path + "." + key + ": wrong type (" + doc.at(key).dump() + ")");
  }
}

}  // namespace

ModelConfig model_config_from_json(const nlohmann::json& doc, const ModelConfig& base, std::vector<std::string>& errors,
                                   const std::string& path) {
  ModelConfig c = base;
  if (!doc.is_object()) {
    errors.push_back(path + ": expected an object");
    return c;
  }
  static const std::set<std::string> known{"volume",   "patch",      "embed_dim",       "stage1_channels",
                                           "modality_dim", "depth",  "heads",           "mlp_ratio",
                                           "conv_after", "interleave_conv", "tokenizer", "mae_depth",
                                           "mae_dim",  "mae_heads",  "num_classes"};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!known.count(it.key())) errors.push_back(path + "." + it.key() + ": unknown field");
  }
  if (doc.contains("volume")) {
    const auto& v = doc.at("volume");
    if (v.is_number_integer()) {
      const auto e = v.get<std::int64_t>();
      c.volume = {e, e, e};
    } else if (v.is_array() && v.size() == 3 && v[0].is_number_integer() && v[1].is_number_integer() &&
               v[2].is_number_integer()) {
      c.volume = {v[0].get<std::int64_t>(), v[1].get<std::int64_t>(), v[2].get<std::int64_t>()};
    } else {
      errors.push_back(path + ".volume: expected an integer or three integers");
    }
  }
  read_field(doc, "patch", c.patch, errors, path);
  read_field(doc, "embed_dim", c.embed_dim, errors, path);
  read_field(doc, "stage1_channels", c.stage1_channels, errors, path);
  read_field(doc, "modality_dim", c.modality_dim, errors, path);
  read_field(doc, "depth", c.depth, errors, path);
  read_field(doc, "heads", c.heads, errors, path);
  read_field(doc, "mlp_ratio", c.mlp_ratio, errors, path);
  read_field(doc, "conv_after", c.conv_after, errors, path);
  read_field(doc, "interleave_conv", c.interleave_conv, errors, path);
  if (doc.contains("tokenizer")) {
    const auto& t = doc.at("tokenizer");
    if (t.is_string() && (t.get<std::string>() == "dynamic" || t.get<std::string>() == "vit")) {
      c.tokenizer = parse_tokenizer(t.get<std::string>());
    } else {
      errors.push_back(path + ".tokenizer: expected \"dynamic\" or \"vit\"");
    }
  }
  read_field(doc, "mae_depth", c.mae_depth, errors, path);
  read_field(doc, "mae_dim", c.mae_dim, errors, path);
  read_field(doc, "mae_heads", c.mae_heads, errors, path);
  read_field(doc, "num_classes", c.num_classes, errors, path);
  return c;
}

}  // namespace vivit::detail
