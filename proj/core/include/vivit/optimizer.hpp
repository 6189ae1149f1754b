#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vivit/parameters.hpp"

namespace vivit {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWSlot {
  Tensor m;  // first moment, same shape and dtype as the parameter
  Tensor v;  // second moment
  std::int64_t step = 0;
};

/// Adam with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
///
/// State is keyed by parameter name and created on a parameter's first
/// update, so parameters added mid-run (new modalities) get their own bias
/// correction. Parameters without a gradient in a step are left untouched.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(ParameterSet& params, double lr);

  const AdamWConfig& config() const { return config_; }
  const std::map<std::string, AdamWSlot>& slots() const { return slots_; }
  std::map<std::string, AdamWSlot>& slots() { return slots_; }
  std::int64_t updates() const { return updates_; }
  void set_updates(std::int64_t n) { updates_ = n; }

 private:
  AdamWConfig config_;
  std::map<std::string, AdamWSlot> slots_;
  std::int64_t updates_ = 0;
};

// lr_min + (lr_max - lr_min) (1 + cos(pi * step / total)) / 2
double cosine_lr(std::int64_t step, std::int64_t total, double lr_max, double lr_min = 0.0);

}  // namespace vivit
