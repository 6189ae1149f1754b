#include "vivit/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json_io.hpp"
#include "vivit/errors.hpp"

namespace vivit {

using nlohmann::json;

const char* phase_name(Phase phase) { return phase == Phase::kFinetune ? "finetune" : "pretrain"; }

double default_lr(Phase phase) { return phase == Phase::kFinetune ? 1e-4 : 1e-5; }

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> errors;
  for (const auto& e : model.validate()) errors.push_back("model." + e);
  if (manifest.empty()) errors.push_back("manifest: required");
  if (output_dir.empty()) errors.push_back("output_dir: required");
  if (phase == Phase::kPretrain && !init_checkpoint.empty()) errors.push_back("init: only valid for finetune");
  if (!(lr > 0.0)) errors.push_back("lr: must be positive");
  if (lr_min < 0.0 || lr_min > lr) errors.push_back("lr_min: must lie in [0, lr]");
  if (weight_decay < 0.0) errors.push_back("weight_decay: must be >= 0");
  if (epochs < 1 && steps < 1) errors.push_back("epochs: must be >= 1 unless steps is set");
  if (steps < 0) errors.push_back("steps: must be >= 0");
  if (accumulation < 1) errors.push_back("accumulation: must be >= 1");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    errors.push_back("mask_ratio: must lie in (0, 1), got " + std::to_string(mask_ratio));
  }
  if (checkpoint_every < 1) errors.push_back("checkpoint_every: must be >= 1");
  if (eval_every < 0) errors.push_back("eval_every: must be >= 0");
  return errors;
}

namespace {

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

void apply_override(json& doc, const std::string& item, std::vector<std::string>& errors) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) {
    errors.push_back("override '" + item + "': expected key=value");
    return;
  }
  const std::string key = item.substr(0, eq);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = parse_value(item.substr(eq + 1));
      return;
    }
    json& child = (*node)[part];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) {
      errors.push_back("override '" + item + "': " + part + " is not an object");
      return;
    }
    node = &child;
    start = dot + 1;
  }
}

template <typename T>
void field(const json& doc, const char* key, T& out, std::vector<std::string>& errors) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception&) {
    errors.push_back(std::string(key) + ": wrong type (" + doc.at(key).dump() + ")");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  std::vector<std::string> errors;
  for (const auto& o : overrides) apply_override(doc, o, errors);

  static const std::set<std::string> known{"phase",  "manifest", "output_dir",      "init",       "model",
                                           "lr",     "lr_min",   "weight_decay",    "epochs",     "steps",
                                           "accumulation", "mask_ratio", "seed", "checkpoint_every",
                                           "eval_every", "exclude_modalities"};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!known.count(it.key())) errors.push_back(it.key() + ": unknown field");
  }
  RunConfig c;
  if (doc.contains("phase")) {
    const auto& p = doc.at("phase");
    if (p == "pretrain") {
      c.phase = Phase::kPretrain;
    } else if (p == "finetune") {
      c.phase = Phase::kFinetune;
    } else {
      errors.push_back("phase: expected \"pretrain\" or \"finetune\"");
    }
  }
  c.lr = default_lr(c.phase);
  field(doc, "manifest", c.manifest, errors);
  field(doc, "output_dir", c.output_dir, errors);
  field(doc, "init", c.init_checkpoint, errors);
  if (doc.contains("model")) c.model = detail::model_config_from_json(doc.at("model"), c.model, errors);
  field(doc, "lr", c.lr, errors);
  field(doc, "lr_min", c.lr_min, errors);
  field(doc, "weight_decay", c.weight_decay, errors);
  field(doc, "epochs", c.epochs, errors);
  field(doc, "steps", c.steps, errors);
  field(doc, "accumulation", c.accumulation, errors);
  field(doc, "mask_ratio", c.mask_ratio, errors);
  field(doc, "seed", c.seed, errors);
  field(doc, "checkpoint_every", c.checkpoint_every, errors);
  field(doc, "eval_every", c.eval_every, errors);
  field(doc, "exclude_modalities", c.exclude_modalities, errors);
  for (const auto& e : c.validate()) errors.push_back(e);
  if (!errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig read_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides);
}

std::string run_config_to_json(const RunConfig& c) {
  detail::ordered_json j;
  j["phase"] = phase_name(c.phase);
  j["manifest"] = c.manifest;
  j["output_dir"] = c.output_dir;
  j["init"] = c.init_checkpoint;
  j["model"] = detail::model_config_to_json(c.model);
  j["lr"] = c.lr;
  j["lr_min"] = c.lr_min;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["steps"] = c.steps;
  j["accumulation"] = c.accumulation;
  j["mask_ratio"] = c.mask_ratio;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["eval_every"] = c.eval_every;
  j["exclude_modalities"] = c.exclude_modalities;
  return j.dump(2) + "\n";
}

}  // namespace vivit
