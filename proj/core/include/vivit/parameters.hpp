#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vivit/tensor.hpp"

namespace vivit {

enum class InitKind {
  kZeros,
  kOnes,
  kNormal,         // N(0, stddev^2)
  kFanInUniform,   // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kXavierUniform,  // U(-a, a), a = sqrt(6 / (fan_in + fan_out))
};

struct InitSpec {
  InitKind kind = InitKind::kZeros;
  double stddev = 0.02;
  std::int64_t fan_in = 1;
  std::int64_t fan_out = 1;

  static InitSpec zeros() { return {InitKind::kZeros}; }
  static InitSpec ones() { return {InitKind::kOnes}; }
  static InitSpec normal(double stddev) { return {InitKind::kNormal, stddev}; }
  static InitSpec fan_in_uniform(std::int64_t fan_in) { return {InitKind::kFanInUniform, 0.0, fan_in}; }
  static InitSpec xavier(std::int64_t fan_in, std::int64_t fan_out) {
    return {InitKind::kXavierUniform, 0.0, fan_in, fan_out};
  }
};

/// Named collection of every learnable tensor of a model.
///
/// Initial values depend only on (seed, name), so parameters created lazily
/// (new modalities, attention-bank entries) are reproducible regardless of
/// creation order. Iteration order is lexicographic by name.
class ParameterSet {
 public:
  explicit ParameterSet(std::uint64_t seed = 0, DType dtype = DType::kFloat32);

  // Throws if the name already exists.
  Tensor create(const std::string& name, Shape shape, const InitSpec& init);
  bool contains(const std::string& name) const;
  Tensor at(const std::string& name) const;

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::int64_t total_elements() const;

  void zero_grad();
  // Converts every tensor in place (handles held by layers stay valid).
  void cast(DType dtype);
  DType dtype() const { return dtype_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  DType dtype_;
  std::map<std::string, Tensor> tensors_;
};

}  // namespace vivit
