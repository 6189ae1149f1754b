#pragma once

#include <vector>

#include "vivit/tensor.hpp"

namespace vivit {

inline constexpr double kDiceEpsilon = 1e-5;

// 1 - mean_c (2 sum(p t) + eps) / (sum(p) + sum(t) + eps), p = sigmoid(logits).
// logits, target: [num_classes, ...] with matching shapes.
Tensor dice_loss(const Tensor& logits, const Tensor& target, double eps = kDiceEpsilon);

struct DiceScores {
  std::vector<double> per_channel;
  double mean = 0.0;
};

// Hard Dice of (probabilities > threshold) against a binary target. A channel
// where both masks are empty scores 1.
DiceScores dice_score(const Tensor& probabilities, const Tensor& target, double threshold = 0.5);

// Dice of a hard mask computed from logits (sigmoid then threshold).
DiceScores dice_from_logits(const Tensor& logits, const Tensor& target, double threshold = 0.5);

}  // namespace vivit
