#include "vivit/losses.hpp"

#include <cmath>

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

namespace vivit {

namespace {

void require_match(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
  if (a.rank() < 1 || a.dim(0) < 1) throw ShapeError(std::string(what) + ": need at least one channel");
}

}  // namespace

Tensor dice_loss(const Tensor& logits, const Tensor& target, double eps) {
  require_match(logits, target, "dice_loss");
  const std::int64_t channels = logits.dim(0);
  const std::int64_t voxels = logits.numel() / channels;
  const Tensor p = ops::reshape(ops::sigmoid(logits), {channels, voxels});
  const Tensor t = ops::reshape(target.dtype() == logits.dtype() ? target.detach() : target.to(logits.dtype()),
                                {channels, voxels});
  const Tensor overlap = ops::sum_over_axis(ops::mul(p, t), 1);
  const Tensor denom = ops::add(ops::sum_over_axis(p, 1), ops::sum_over_axis(t, 1));
  const Tensor ratio = ops::div(ops::add_scalar(ops::scale(overlap, 2.0), eps), ops::add_scalar(denom, eps));
  return ops::add_scalar(ops::scale(ops::mean(ratio), -1.0), 1.0);
}

DiceScores dice_score(const Tensor& probabilities, const Tensor& target, double threshold) {
  require_match(probabilities, target, "dice_score");
  const std::int64_t channels = probabilities.dim(0);
  const std::int64_t voxels = probabilities.numel() / channels;
  const auto p = probabilities.to_vector();
  const auto t = target.to_vector();
  DiceScores out;
  for (std::int64_t c = 0; c < channels; ++c) {
    std::int64_t a = 0, b = 0, both = 0;
    for (std::int64_t v = 0; v < voxels; ++v) {
      const auto i = static_cast<std::size_t>(c * voxels + v);
      const bool in_a = p[i] > threshold;
      const bool in_b = t[i] > 0.5;
      a += in_a;
      b += in_b;
      both += in_a && in_b;
    }
    out.per_channel.push_back(a + b == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(a + b));
  }
  double sum = 0.0;
  for (double d : out.per_channel) sum += d;
  out.mean = sum / static_cast<double>(channels);
  return out;
}

DiceScores dice_from_logits(const Tensor& logits, const Tensor& target, double threshold) {
  NoGradGuard guard;
  return dice_score(ops::sigmoid(logits.detach()), target, threshold);
}

}  // namespace vivit
