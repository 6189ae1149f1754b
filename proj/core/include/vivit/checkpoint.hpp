#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vivit/model.hpp"
#include "vivit/optimizer.hpp"

namespace vivit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Tensor value;
};

/// Raw checkpoint contents.
///
/// File layout: "VIVT", u32 version, u32 entry count, then per entry
/// u32 name length, name bytes, u8 dtype (1 = f32, 2 = f64), u32 rank,
/// u32 extents, little-endian payload; then u64 footer length and a JSON
/// footer. Entries are sorted by name and the footer holds no timestamps,
/// so equal states encode to equal bytes.
struct Checkpoint {
  std::vector<CheckpointTensor> tensors;
  std::string footer;

  const CheckpointTensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

struct TrainingState {
  std::string phase;  // "pretrain", "finetune" or empty
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::string rng_state;
  double best_metric = 0.0;
  std::string run_config;  // JSON text of the run config, may be empty
};

// Parameters, optimizer moments and metadata of a model.
Checkpoint capture_checkpoint(const VivitModel& model, const AdamW* optimizer, const TrainingState& state);

struct CheckpointInfo {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::vector<std::string> modalities;  // registry order
  std::vector<std::pair<std::string, std::int64_t>> bank;
  TrainingState state;
  bool has_optimizer = false;
};

CheckpointInfo checkpoint_info(const Checkpoint& checkpoint);

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> unmatched;  // checkpoint tensors not copied into the model
  std::vector<std::string> fresh;      // model tensors left at initialization
  std::int64_t optimizer_entries = 0;  // moment tensors, reported apart from parameters
};

// Registers the checkpoint's modalities, then copies every parameter whose
// name starts with one of `prefixes` (all when empty). Shape mismatches throw.
LoadReport load_parameters(VivitModel& model, const Checkpoint& checkpoint,
                           const std::vector<std::string>& prefixes = {});

// Builds a model matching the checkpoint (registry, bank entries, values).
std::unique_ptr<VivitModel> model_from_checkpoint(const Checkpoint& checkpoint, ModelHeads heads);

void restore_optimizer(AdamW& optimizer, const Checkpoint& checkpoint);

}  // namespace vivit
