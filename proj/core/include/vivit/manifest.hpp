#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vivit/modality_registry.hpp"
#include "vivit/study.hpp"

namespace vivit {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split split);
Split parse_split(const std::string& name);

struct StudyRecord {
  std::string id;
  Split split = Split::kTrain;
  // (modality, path) in declared modality order; paths relative to the manifest dir.
  std::vector<std::pair<std::string, std::string>> volumes;
  std::optional<std::string> label;
};

struct Manifest {
  std::vector<std::string> modalities;  // declared universe
  std::vector<StudyRecord> studies;
  std::filesystem::path base_dir;       // directory of the manifest file

  std::vector<const StudyRecord*> split(Split which) const;
  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
};

// Parses and validates: unique study ids, no duplicate modality within a
// study, every modality declared, every referenced file present.
Manifest read_manifest(const std::filesystem::path& path);
Manifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir,
                        bool check_files = true);
std::string manifest_to_json(const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct LoadOptions {
  std::array<std::int64_t, 3> volume{16, 16, 16};  // model input extent
  std::int64_t num_classes = 1;
  bool load_label = true;
  DType dtype = DType::kFloat32;
};

// Reads every volume, resizes to the model extent, then normalizes over
// nonzero voxels. With num_classes > 1 the label is read as a bitmask, one
// bit per channel.
StudyTensors load_study(const Manifest& manifest, const StudyRecord& record, const LoadOptions& options);

// Sorts a study's volumes by registry index.
void canonicalize(StudyTensors& study, const ModalityRegistry& registry);

}  // namespace vivit
