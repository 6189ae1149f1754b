#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vivit/model_config.hpp"

namespace vivit {

enum class Phase { kPretrain, kFinetune };

const char* phase_name(Phase phase);

/// Everything needed to reproduce a training run.
struct RunConfig {
  Phase phase = Phase::kPretrain;
  std::string manifest;
  std::string output_dir;
  std::string init_checkpoint;  // finetune only; empty trains from scratch
  ModelConfig model;

  double lr = 1e-5;       // peak of the cosine schedule
  double lr_min = 0.0;
  double weight_decay = 0.01;
  std::int64_t epochs = 10;
  std::int64_t steps = 0;          // > 0 overrides epochs
  std::int64_t accumulation = 4;   // studies per optimizer step
  double mask_ratio = 0.7;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 1;  // epochs
  std::int64_t eval_every = 0;        // steps; 0 evaluates at each epoch end
  std::vector<std::string> exclude_modalities;  // dropped from every study at load

  // Every violated constraint, one message each.
  std::vector<std::string> validate() const;
};

// Default learning rate per phase.
double default_lr(Phase phase);

// Parses a JSON config; `overrides` are "key=value" pairs applied first
// (nested keys use dots, e.g. "model.depth=4"; values are JSON or bare
// strings). Throws ConfigError listing every problem.
RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
RunConfig read_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
std::string run_config_to_json(const RunConfig& config);

}  // namespace vivit
