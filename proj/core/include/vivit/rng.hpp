#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace vivit {

// Stable 64-bit hash (FNV-1a) used to derive seeds from names.
std::uint64_t stable_hash(std::string_view text);

// splitmix64 finalizer; mixes a seed with a key into a new seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  return mix_seed(seed, stable_hash(key));
}

/// Seeded random source with platform-independent distributions.
///
/// The standard distributions are implementation-defined, so uniform, normal
/// and bounded-integer draws are computed here directly from the engine
/// output. Every stream is reproducible bit-exactly from its seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  // Uniform integer in [lo, hi].
  std::int64_t uniform_range(std::int64_t lo, std::int64_t hi);
  double normal(double mean = 0.0, double stddev = 1.0);

  // Independent child stream keyed by a label.
  Rng split(std::string_view key) const;

  std::uint64_t seed() const { return seed_; }

  // Full engine state as text (round-trips through restore()).
  std::string state() const;
  void restore(const std::string& state);

  // `count` distinct indices from [0, n), sorted ascending.
  std::vector<std::int64_t> sample_without_replacement(std::int64_t n, std::int64_t count);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace vivit
