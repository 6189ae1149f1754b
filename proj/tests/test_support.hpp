#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vivit/model.hpp"
#include "vivit/rng.hpp"
#include "vivit/study.hpp"

namespace testing {

// 8^3 volumes, 2^3 token grid, two blocks: small enough for 64-bit gradient checks.
inline vivit::ModelConfig tiny_config() {
  vivit::ModelConfig c;
  c.volume = {8, 8, 8};
  c.patch = 4;
  c.embed_dim = 16;
  c.stage1_channels = 4;
  c.modality_dim = 4;
  c.depth = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.conv_after = {1, 2};
  c.mae_depth = 1;
  c.mae_dim = 8;
  c.mae_heads = 2;
  c.num_classes = 1;
  return c;
}

inline vivit::StudyTensors random_study(const vivit::ModelConfig& config, const std::vector<std::string>& modalities,
                                        std::uint64_t seed, vivit::DType dtype = vivit::DType::kFloat64,
                                        bool label = false) {
  vivit::Rng rng(seed);
  vivit::StudyTensors study;
  study.id = "s" + std::to_string(seed);
  const vivit::Shape shape{1, config.volume[0], config.volume[1], config.volume[2]};
  for (const auto& name : modalities) {
    study.volumes.push_back({name, oracle::random_tensor(rng, shape, 1.0, dtype)});
  }
  if (label) {
    std::vector<double> t(static_cast<std::size_t>(config.num_classes * vivit::shape_numel(shape)));
    for (auto& v : t) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    study.label = vivit::Tensor::from_values({config.num_classes, config.volume[0], config.volume[1], config.volume[2]},
                                             t, dtype);
  }
  return study;
}

// Replaces every parameter value with a seeded normal draw so that zero-initialized
// projections, heads and biases take part in equivalence checks.
inline void randomize(vivit::ParameterSet& params, std::uint64_t seed, double scale = 0.2) {
  vivit::Rng rng(seed);
  for (const auto& [name, t] : params.tensors()) {
    vivit::Tensor h = t;
    for (std::int64_t i = 0; i < h.numel(); ++i) h.set_value(i, rng.normal() * scale);
  }
}

inline void fill(vivit::Tensor t, double value) {
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set_value(i, value);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vivit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
