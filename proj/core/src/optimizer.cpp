#include "vivit/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "vivit/errors.hpp"

namespace vivit {

void AdamW::step(ParameterSet& params, double lr) {
  ++updates_;
  for (const auto& [name, param] : params.tensors()) {
    if (!param.has_grad()) continue;
    auto [it, fresh] = slots_.try_emplace(name);
    AdamWSlot& slot = it->second;
    if (fresh || slot.m.shape() != param.shape() || slot.m.dtype() != param.dtype()) {
      if (!fresh && slot.m.shape() != param.shape()) {
        throw ShapeError("optimizer state for " + name + " has shape " + shape_str(slot.m.shape()) +
                         ", parameter has " + shape_str(param.shape()));
      }
      if (fresh) {
        slot.m = Tensor::zeros(param.shape(), param.dtype());
        slot.v = Tensor::zeros(param.shape(), param.dtype());
      } else {
        slot.m = slot.m.to(param.dtype());
        slot.v = slot.v.to(param.dtype());
      }
    }
    ++slot.step;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.step));
    const double wd = config_.weight_decay, eps = config_.eps;
    Tensor p = param;
    dispatch(param.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto w = p.data<T>();
      auto g = p.grad_data<T>();
      auto m = slot.m.data<T>();
      auto v = slot.v.data<T>();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
        const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = (mi / c1) / (std::sqrt(vi / c2) + eps) + wd * static_cast<double>(w[i]);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * update);
      }
    });
  }
}

double cosine_lr(std::int64_t step, std::int64_t total, double lr_max, double lr_min) {
  if (total <= 0) throw ConfigError("cosine_lr: total steps must be positive");
  if (step < 0 || step > total) {
    throw ConfigError("cosine_lr: step " + std::to_string(step) + " outside 0.." + std::to_string(total));
  }
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

}  // namespace vivit
