#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vivit/tensor.hpp"

namespace vivit {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates probed per tensor; 0 probes every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "<name>[<flat index>]"
  std::size_t coords_checked = 0;
};

/// Compares reverse-mode gradients of the scalar function `f` against central
/// differences, reporting max |analytic - numeric| / max(1, |numeric|).
///
/// Every tensor must be a 64-bit leaf. `f` is re-evaluated without a tape
/// for the perturbed points, so it must read the tensors' current values.
GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                  const std::vector<std::pair<std::string, Tensor>>& tensors,
                                  const GradCheckOptions& options = {});

// Single-tensor convenience form.
double finite_diff_check(const std::function<Tensor()>& f, const Tensor& x, double step = 1e-5);

}  // namespace vivit
