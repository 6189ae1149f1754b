#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vivit::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

struct GenerateArgs {
  std::string spec;  // path or "default"
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  bool force = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  std::vector<std::string> drop_modalities;
  std::string report;  // JSON report path; empty prints to stdout only
  bool labels_as_logits = false;
};

struct InspectArgs {
  std::string checkpoint;
};

int cmd_generate(const GenerateArgs& args);
int cmd_pretrain(const TrainArgs& args);
int cmd_finetune(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_inspect(const InspectArgs& args);

// Runs fn, mapping library exceptions to exit codes with a message on stderr.
int guarded(const std::string& command, const std::function<int()>& fn);

}  // namespace vivit::cli
