#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vivit/checkpoint.hpp"
#include "vivit/manifest.hpp"
#include "vivit/model.hpp"
#include "vivit/optimizer.hpp"
#include "vivit/run_config.hpp"

namespace vivit {

struct StepRecord {
  std::int64_t step = 0;  // 1-based optimizer update
  std::int64_t epoch = 0;
  double loss = 0.0;      // mean over the step's studies
  double lr = 0.0;
};

struct EvalRecord {
  std::int64_t step = 0;
  double dice = 0.0;  // validation mean Dice
};

struct TrainSummary {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  double best_metric = 0.0;
  std::int64_t best_step = 0;
  LoadReport init_report;
  std::vector<std::string> registered;  // registry names after setup

  // First evaluated step with validation Dice >= threshold.
  std::optional<std::int64_t> first_step_reaching(double dice) const;
};

// Line-delimited JSON metrics; a default-constructed sink discards records.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::filesystem::path& path);
  void step(const std::string& phase, const StepRecord& record);
  void eval(const EvalRecord& record);

 private:
  std::unique_ptr<std::ofstream> out_;
};

// Optional on-disk outputs of a loop.
struct RunOutputs {
  std::filesystem::path dir;  // empty keeps everything in memory
  MetricsLog* log = nullptr;
  std::string config_json;    // stored in checkpoint footers
};

// Optimizer updates per epoch and in total.
std::int64_t steps_per_epoch(std::int64_t studies, std::int64_t accumulation);
std::int64_t total_steps(const RunConfig& config, std::int64_t studies);

/// MAE pretraining. Each step accumulates gradients of `accumulation`
/// studies (the last step of an epoch may take fewer), each with a fresh
/// mask, and applies one AdamW update on the cosine schedule.
TrainSummary pretrain_loop(VivitModel& model, const RunConfig& config, const std::vector<StudyTensors>& train,
                           const RunOutputs& outputs = {});

/// Segmentation finetuning with Dice loss; validation mean Dice selects the
/// best checkpoint.
TrainSummary finetune_loop(VivitModel& model, const RunConfig& config, const std::vector<StudyTensors>& train,
                           const std::vector<StudyTensors>& val, const RunOutputs& outputs = {});

// Mean masked L2 over studies with one fixed plan per study (seeded).
double evaluate_reconstruction(const VivitModel& model, const std::vector<StudyTensors>& studies, double ratio,
                               std::uint64_t seed);
// Mean over studies of channel-mean hard Dice.
double evaluate_dice(VivitModel& model, const std::vector<StudyTensors>& studies);
// Mean over studies of 1 - dice_loss.
double evaluate_soft_dice(VivitModel& model, const std::vector<StudyTensors>& studies);

// Studies of a split, loaded at the model extent with excluded modalities
// dropped (studies left empty are skipped).
std::vector<StudyTensors> load_split(const Manifest& manifest, Split split, const ModelConfig& model,
                                     const std::vector<std::string>& exclude, bool labels);

// Full runs from a config: load data, build or initialize the model, create
// the run directory (refusing to reuse one unless `force`), train, write
// config.json, metrics.jsonl and checkpoints.
TrainSummary run_pretrain(const RunConfig& config, bool force);
TrainSummary run_finetune(const RunConfig& config, bool force);

}  // namespace vivit
