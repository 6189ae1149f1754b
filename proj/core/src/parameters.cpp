#include "vivit/parameters.hpp"

#include <cmath>

#include "vivit/errors.hpp"
#include "vivit/rng.hpp"

namespace vivit {

ParameterSet::ParameterSet(std::uint64_t seed, DType dtype) : seed_(seed), dtype_(dtype) {}

Tensor ParameterSet::create(const std::string& name, Shape shape, const InitSpec& init) {
  if (tensors_.contains(name)) throw ConfigError("parameter '" + name + "' already exists");
  Tensor t = Tensor::zeros(std::move(shape), dtype_);
  Rng rng(derive_seed(seed_, name));
  const std::int64_t n = t.numel();
  switch (init.kind) {
    case InitKind::kZeros:
      break;
    case InitKind::kOnes:
      for (std::int64_t i = 0; i < n; ++i) t.set_value(i, 1.0);
      break;
    case InitKind::kNormal:
      for (std::int64_t i = 0; i < n; ++i) t.set_value(i, rng.normal(0.0, init.stddev));
      break;
    case InitKind::kFanInUniform: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(1, init.fan_in)));
      for (std::int64_t i = 0; i < n; ++i) t.set_value(i, rng.uniform(-bound, bound));
      break;
    }
    case InitKind::kXavierUniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(init.fan_in + init.fan_out));
      for (std::int64_t i = 0; i < n; ++i) t.set_value(i, rng.uniform(-bound, bound));
      break;
    }
  }
  t.set_requires_grad(true);
  tensors_.emplace(name, t);
  return t;
}

bool ParameterSet::contains(const std::string& name) const { return tensors_.contains(name); }

Tensor ParameterSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterSet::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = tensors_.lower_bound(prefix); it != tensors_.end() && it->first.starts_with(prefix); ++it) {
    out.push_back(it->first);
  }
  return out;
}

std::int64_t ParameterSet::total_elements() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

void ParameterSet::cast(DType dtype) {
  for (auto& [name, t] : tensors_) t.cast_(dtype);
  dtype_ = dtype;
}

}  // namespace vivit
