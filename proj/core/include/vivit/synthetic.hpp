#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vivit/manifest.hpp"
#include "vivit/volume_io.hpp"

namespace vivit {

enum class ContrastTransform { kLinear, kInverted, kGamma };

struct ContrastSpec {
  ContrastTransform transform = ContrastTransform::kLinear;
  double lesion_gain = 1.0;  // added inside lesions, after the transform
  double noise = 0.05;       // Gaussian std inside the brain
};

struct SubsetChoice {
  std::vector<std::string> modalities;
  double weight = 1.0;
};

struct SyntheticSpec {
  std::vector<std::string> modalities;
  std::int64_t num_studies = 8;
  std::array<std::int64_t, 3> volume{16, 16, 16};
  double train_fraction = 0.75;
  double val_fraction = 0.25;  // rest is test
  std::vector<SubsetChoice> subsets;  // empty: every study has all modalities
  std::int64_t lesion_count_min = 1;
  std::int64_t lesion_count_max = 2;
  double lesion_radius_min = 2.0;
  double lesion_radius_max = 3.0;
  std::int64_t anatomy_blobs = 6;
  std::map<std::string, ContrastSpec> contrasts;  // missing entries use defaults

  // Infeasible or inconsistent settings, one message each.
  std::vector<std::string> validate() const;
};

SyntheticSpec default_synthetic_spec();
SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec read_synthetic_spec(const std::filesystem::path& path);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);

struct SyntheticStudy {
  std::string id;
  std::vector<std::pair<std::string, Volume>> volumes;
  Volume label;  // 1 inside lesions, 0 elsewhere
  std::int64_t lesion_count = 0;
};

// One study from its own seed; pure function of (spec, seed, index).
SyntheticStudy generate_synthetic_study(const SyntheticSpec& spec, std::uint64_t seed, std::int64_t index);

// Writes volumes, labels and manifest.json under out_dir; returns the manifest path.
std::filesystem::path generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed,
                                                const std::filesystem::path& out_dir);

}  // namespace vivit
