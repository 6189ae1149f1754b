#include "vivit/fusion_decoder.hpp"

#include <algorithm>

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

namespace vivit {

LevelAttentionBank::LevelAttentionBank(ParameterSet& params, std::int64_t dim, std::int64_t heads)
    : params_(&params), dim_(dim), heads_(heads) {}

std::string LevelAttentionBank::prefix(const std::string& modality, std::int64_t level) {
  return "bank." + modality + ".z" + std::to_string(level);
}

const AttentionBlock& LevelAttentionBank::get(const std::string& modality, std::int64_t level) {
  const auto key = std::make_pair(modality, level);
  auto it = blocks_.find(key);
  if (it == blocks_.end()) {
    it = blocks_.emplace(key, AttentionBlock(*params_, prefix(modality, level), dim_, heads_)).first;
  }
  return it->second;
}

bool LevelAttentionBank::contains(const std::string& modality, std::int64_t level) const {
  return blocks_.count({modality, level}) > 0;
}

std::vector<std::pair<std::string, std::int64_t>> LevelAttentionBank::entries() const {
  std::vector<std::pair<std::string, std::int64_t>> out;
  for (const auto& [key, block] : blocks_) out.push_back(key);
  return out;
}

Tensor fuse_level(const Tensor& tap, const TokenSequence& seq, LevelAttentionBank& bank, std::int64_t level) {
  if (tap.rank() != 2 || tap.dim(0) != seq.length()) {
    throw ShapeError("fuse_level: tap " + shape_str(tap.shape()) + " does not match sequence of " +
                     std::to_string(seq.length()) + " tokens");
  }
  Tensor total;
  for (const auto& span : seq.spans) {
    if (span.length != seq.grid_volume()) throw ShapeError("fuse_level: span does not cover the token grid");
    const Tensor decoded = bank.get(span.modality.name, level).forward(ops::slice_rows(tap, span.start, span.length));
    total = total.defined() ? ops::add(total, decoded) : decoded;
  }
  if (!total.defined()) throw ShapeError("fuse_level: sequence has no modality spans");
  const Tensor mean = seq.spans.size() == 1 ? total : ops::scale(total, 1.0 / static_cast<double>(seq.spans.size()));
  return rows_to_grid(mean, seq.grid);
}

Tensor fuse_stage1(const Stage1Features& stage1) {
  if (stage1.maps.empty()) throw ShapeError("fuse_stage1: no feature maps");
  Tensor total = stage1.maps.front();
  for (std::size_t i = 1; i < stage1.maps.size(); ++i) total = ops::add(total, stage1.maps[i]);
  return stage1.maps.size() == 1 ? total : ops::scale(total, 1.0 / static_cast<double>(stage1.maps.size()));
}

namespace {

std::int64_t log2_exact(std::int64_t v) {
  std::int64_t n = 0;
  while ((std::int64_t{1} << n) < v) ++n;
  return n;
}

Tensor concat_channels(const std::vector<Tensor>& parts) { return ops::concat_rows(parts); }

}  // namespace

CnnDecoder::CnnDecoder(ParameterSet& params, const ModelConfig& config) : levels_(config.conv_after.size()) {
  const std::int64_t t = config.embed_dim;
  const std::int64_t c = config.stage1_channels;
  const std::int64_t half_patch = config.patch / 2;
  bottleneck_ = ConvBlock(params, "decoder.bottleneck", t, t);

  std::int64_t main_res = 1;  // in multiples of the token grid
  std::int64_t main_ch = t;
  const std::size_t skips = levels_ - 1;
  for (std::size_t s = 1; s <= skips; ++s) {
    const bool last = s == skips;
    const std::int64_t res = last ? half_patch : std::min<std::int64_t>(std::int64_t{1} << s, half_patch);
    const std::int64_t ch = last ? c : std::max<std::int64_t>(c, t >> s);
    const std::string p = "decoder.stage" + std::to_string(s);
    SkipStage stage;

    std::int64_t skip_ch = t;
    const std::int64_t skip_ups = log2_exact(res);
    for (std::int64_t u = 0; u < skip_ups; ++u) {
      const std::string q = p + ".skip" + std::to_string(u);
      stage.skip_ups.emplace_back(params, q + ".up", skip_ch, ch);
      stage.skip_blocks.emplace_back(params, q + ".block", ch, ch);
      skip_ch = ch;
    }
    if (skip_ups == 0) {
      stage.skip_blocks.emplace_back(params, p + ".skip0.block", t, ch);
    }

    const std::int64_t main_ups = log2_exact(res / main_res);
    for (std::int64_t u = 0; u < main_ups; ++u) {
      stage.main_ups.emplace_back(params, p + ".up" + std::to_string(u), main_ch, ch);
      main_ch = ch;
    }
    const std::int64_t join_in = main_ch + ch + (last ? c : 0);
    stage.join = ConvBlock(params, p + ".join", join_in, ch);
    stages_.push_back(std::move(stage));
    main_res = res;
    main_ch = ch;
  }
  final_up_ = UpConv3d(params, "decoder.final_up", c, c);
  final_block_ = ConvBlock(params, "decoder.final_block", c, c);
  head_ = Conv3d(params, "decoder.head", c, config.num_classes, 1, 1, 0);
}

Tensor CnnDecoder::forward(const std::vector<Tensor>& fused, const Tensor& stage1) const {
  if (fused.size() != levels_) {
    throw ShapeError("decoder: expected " + std::to_string(levels_) + " fused levels, got " +
                     std::to_string(fused.size()));
  }
  Tensor x = bottleneck_.forward(fused.back());
  for (std::size_t s = 1; s < levels_; ++s) {
    const SkipStage& stage = stages_[s - 1];
    Tensor skip = fused[levels_ - 1 - s];
    if (stage.skip_ups.empty()) {
      skip = stage.skip_blocks.front().forward(skip);
    } else {
      for (std::size_t u = 0; u < stage.skip_ups.size(); ++u) {
        skip = stage.skip_blocks[u].forward(stage.skip_ups[u].forward(skip));
      }
    }
    for (const auto& up : stage.main_ups) x = up.forward(x);
    std::vector<Tensor> parts{x, skip};
    if (s + 1 == levels_) parts.push_back(stage1);
    x = stage.join.forward(concat_channels(parts));
  }
  x = final_block_.forward(final_up_.forward(x));
  return head_.forward(x);
}

}  // namespace vivit
