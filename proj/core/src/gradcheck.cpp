#include "vivit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vivit/errors.hpp"
#include "vivit/rng.hpp"

namespace vivit {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  NoGradGuard no_grad;
  const Tensor y = f();
  if (y.numel() != 1) throw AutodiffError("finite_diff_check: f must be scalar-valued");
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: f(x) is not finite");
  return v;
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                  const std::vector<std::pair<std::string, Tensor>>& tensors,
                                  const GradCheckOptions& options) {
  std::vector<bool> previous_flags;
  for (const auto& [name, t] : tensors) {
    if (t.dtype() != DType::kFloat64) {
      throw AutodiffError("finite_diff_check requires 64-bit tensors (" + name + " is " +
                          dtype_name(t.dtype()) + ")");
    }
    if (!t.is_leaf()) throw AutodiffError("finite_diff_check: " + name + " is not a leaf");
    previous_flags.push_back(t.requires_grad());
  }
  for (auto [name, t] : tensors) {
    t.set_requires_grad(true);
    t.zero_grad();
  }

  std::vector<Tensor> analytic;
  {
    Tape tape;
    const Tensor y = f();
    if (y.numel() != 1) throw AutodiffError("finite_diff_check: f must be scalar-valued");
    if (!std::isfinite(y.item())) throw NumericError("finite_diff_check: f(x) is not finite");
    tape.backward(y);
  }
  for (const auto& [name, t] : tensors) analytic.push_back(t.grad());

  GradCheckReport report;
  Rng rng(options.seed);
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Tensor t = tensors[ti].second;
    const std::int64_t n = t.numel();
    std::vector<std::int64_t> coords;
    if (options.max_coords_per_tensor == 0 ||
        static_cast<std::int64_t>(options.max_coords_per_tensor) >= n) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      coords = rng.sample_without_replacement(n, static_cast<std::int64_t>(options.max_coords_per_tensor));
    }
    for (auto i : coords) {
      const double original = t.value(i);
      t.set_value(i, original + options.step);
      const double up = eval_scalar(f);
      t.set_value(i, original - options.step);
      const double down = eval_scalar(f);
      t.set_value(i, original);
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = std::abs(analytic[ti].value(i) - numeric) / std::max(1.0, std::abs(numeric));
      ++report.coords_checked;
      if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err >= report.max_rel_error) report.worst = tensors[ti].first + "[" + std::to_string(i) + "]";
      }
    }
  }

  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Tensor t = tensors[ti].second;
    t.zero_grad();
    t.set_requires_grad(previous_flags[ti]);
  }
  return report;
}

double finite_diff_check(const std::function<Tensor()>& f, const Tensor& x, double step) {
  GradCheckOptions options;
  options.step = step;
  return finite_diff_check(f, {{"x", x}}, options).max_rel_error;
}

}  // namespace vivit
