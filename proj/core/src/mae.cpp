#include "vivit/mae.hpp"

#include <cmath>

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

namespace vivit {

MaskPlan make_mask_plan(std::int64_t total, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("mask ratio must lie in (0, 1), got " + std::to_string(ratio));
  if (total < 2) throw ShapeError("masking needs at least two tokens, got " + std::to_string(total));
  const auto count = static_cast<std::int64_t>(std::floor(ratio * static_cast<double>(total) + 1e-9));
  if (count < 1) throw ConfigError("mask ratio " + std::to_string(ratio) + " masks no token of " + std::to_string(total));
  Rng rng(seed);
  MaskPlan plan;
  plan.masked_indices = rng.sample_without_replacement(total, count);
  plan.ratio = ratio;
  plan.seed = seed;
  plan.total = total;
  return plan;
}

Tensor apply_mask(const TokenSequence& seq, const MaskPlan& plan, const Tensor& mask_token) {
  if (plan.total != seq.length()) {
    throw ShapeError("mask plan covers " + std::to_string(plan.total) + " tokens, sequence has " +
                     std::to_string(seq.length()));
  }
  const auto count = static_cast<std::int64_t>(plan.masked_indices.size());
  const Tensor fill = ops::add(ops::repeat_rows(mask_token, count), ops::gather_rows(seq.embeddings, plan.masked_indices));
  return ops::replace_rows(seq.tokens, plan.masked_indices, fill);
}

MaskedSequence mask_tokens(const TokenSequence& seq, double ratio, Rng& rng, const Tensor& mask_token) {
  MaskedSequence out;
  out.plan = make_mask_plan(seq.length(), ratio, rng.next_u64());
  out.tokens = apply_mask(seq, out.plan, mask_token);
  return out;
}

Tensor patchify(const Tensor& volume, std::int64_t patch) {
  if (volume.rank() != 4 || volume.dim(0) != 1) {
    throw ShapeError("patchify: expected [1,H,W,D], got " + shape_str(volume.shape()));
  }
  const std::int64_t gx = volume.dim(1) / patch, gy = volume.dim(2) / patch, gz = volume.dim(3) / patch;
  if (gx * patch != volume.dim(1) || gy * patch != volume.dim(2) || gz * patch != volume.dim(3)) {
    throw ShapeError("patchify: " + shape_str(volume.shape()) + " not divisible by patch " + std::to_string(patch));
  }
  const Tensor split = ops::reshape(volume, {gx, patch, gy, patch, gz, patch});
  return ops::reshape(ops::permute(split, {0, 2, 4, 1, 3, 5}), {gx * gy * gz, patch * patch * patch});
}

Tensor unpatchify(const Tensor& patches, std::int64_t patch, const ops::Extent3& volume) {
  const std::int64_t gx = volume[0] / patch, gy = volume[1] / patch, gz = volume[2] / patch;
  if (patches.rank() != 2 || patches.dim(0) != gx * gy * gz || patches.dim(1) != patch * patch * patch) {
    throw ShapeError("unpatchify: " + shape_str(patches.shape()) + " does not tile the volume");
  }
  const Tensor split = ops::reshape(patches, {gx, gy, gz, patch, patch, patch});
  return ops::reshape(ops::permute(split, {0, 3, 1, 4, 2, 5}), {1, volume[0], volume[1], volume[2]});
}

Tensor reconstruction_targets(const StudyTensors& study, std::int64_t patch) {
  std::vector<Tensor> parts;
  for (const auto& mv : study.volumes) parts.push_back(patchify(mv.volume.detach(), patch));
  if (parts.empty()) throw ShapeError("reconstruction_targets: study has no volumes");
  return parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
}

Tensor masked_l2_loss(const Tensor& pred, const Tensor& targets, const MaskPlan& plan) {
  if (pred.shape() != targets.shape()) {
    throw ShapeError("masked_l2_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                     shape_str(targets.shape()));
  }
  if (plan.masked_indices.empty()) throw ShapeError("masked_l2_loss: empty mask set");
  const Tensor diff = ops::sub(ops::gather_rows(pred, plan.masked_indices), ops::gather_rows(targets, plan.masked_indices));
  return ops::mean(ops::mul(diff, diff));
}

MaeDecoder::MaeDecoder(ParameterSet& params, const ModelConfig& config)
    : mask_token_(params.create("mae.mask_token", {config.embed_dim}, InitSpec::normal(0.02))),
      embed_(params, "mae.embed", config.embed_dim, config.decoder_dim()),
      positions_(params.create("mae.position", {config.tokens_per_modality(), config.decoder_dim()},
                               InitSpec::normal(0.02))),
      head_(params, "mae.head", config.decoder_dim(), config.patch * config.patch * config.patch, InitSpec::zeros()) {
  for (std::int64_t i = 1; i <= config.mae_depth; ++i) {
    blocks_.emplace_back(params, "mae.block" + std::to_string(i), config.decoder_dim(), config.mae_heads,
                         config.mlp_ratio);
  }
}

Tensor MaeDecoder::forward(const Tensor& encoded) const {
  const std::int64_t grid = positions_.dim(0);
  if (encoded.rank() != 2 || encoded.dim(0) % grid != 0) {
    throw ShapeError("mae decoder: " + shape_str(encoded.shape()) + " is not a whole number of " +
                     std::to_string(grid) + "-token spans");
  }
  const std::vector<Tensor> copies(static_cast<std::size_t>(encoded.dim(0) / grid), positions_);
  Tensor x = ops::add(embed_.forward(encoded), copies.size() == 1 ? positions_ : ops::concat_rows(copies));
  for (const auto& block : blocks_) x = block.forward(x);
  return head_.forward(x);
}

}  // namespace vivit
