#include "vivit/encoder.hpp"

#include <algorithm>

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

namespace vivit {

const Tensor& FeaturePyramid::tap(std::int64_t level) const {
  const auto it = std::find(levels.begin(), levels.end(), level);
  if (it == levels.end()) throw ConfigError("no encoder tap at level " + std::to_string(level));
  return taps[static_cast<std::size_t>(it - levels.begin())];
}

namespace {

// Spans must enumerate the grid in lexicographic order for the reshape to
// place every token at its own coordinate.
void check_span_layout(const TokenSequence& seq) {
  const auto& g = seq.grid;
  for (const auto& span : seq.spans) {
    if (span.length != seq.grid_volume()) {
      throw ShapeError("span of " + span.modality.name + " has " + std::to_string(span.length) +
                       " tokens, grid holds " + std::to_string(seq.grid_volume()));
    }
    for (std::int64_t j = 0; j < span.length; ++j) {
      const TokenMeta& m = seq.meta.at(static_cast<std::size_t>(span.start + j));
      if (m.modality != span.modality.index || (m.px * g[1] + m.py) * g[2] + m.pz != j) {
        throw ShapeError("token metadata of " + span.modality.name + " is not in grid order");
      }
    }
  }
}

}  // namespace

Tensor conv_interleave(const Tensor& x, const TokenSequence& seq, const ModalityRegistry& registry,
                       const DynamicConv3d& layer) {
  check_span_layout(seq);
  if (x.rank() != 2 || x.dim(0) != static_cast<std::int64_t>(seq.meta.size())) {
    throw ShapeError("conv_interleave: input " + shape_str(x.shape()) + " does not match " +
                     std::to_string(seq.meta.size()) + " tokens");
  }
  std::vector<Tensor> parts;
  parts.reserve(seq.spans.size());
  for (const auto& span : seq.spans) {
    const Tensor rows = ops::slice_rows(x, span.start, span.length);
    const Tensor grid = rows_to_grid(rows, seq.grid);
    const Tensor conv = layer.forward(grid, registry.entry(span.modality).vector);
    parts.push_back(ops::add(rows, grid_to_rows(conv)));
  }
  return parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
}

Encoder::Encoder(ParameterSet& params, const ModelConfig& config) : config_(config) {
  const std::int64_t t = config.embed_dim;
  for (std::int64_t i = 1; i <= config.depth; ++i) {
    blocks_.emplace_back(params, "encoder.block" + std::to_string(i), t, config.heads, config.mlp_ratio);
  }
  if (config.interleave_conv) {
    for (const std::int64_t level : config.conv_after) {
      convs_.emplace_back(params, "encoder.conv" + std::to_string(level), DynamicConvSpec{t, t, 3, 1, 1},
                          config.modality_dim);
    }
  }
}

FeaturePyramid Encoder::encode(const TokenSequence& seq, Stage1Features stage1, const ModalityRegistry& registry,
                               const Tensor& tokens) const {
  FeaturePyramid out;
  out.stage1 = std::move(stage1);
  Tensor x = tokens.defined() ? tokens : seq.tokens;
  if (x.shape() != seq.tokens.shape()) {
    throw ShapeError("encode: tokens " + shape_str(x.shape()) + " vs sequence " + shape_str(seq.tokens.shape()));
  }
  std::size_t next_tap = 0;
  for (std::int64_t i = 1; i <= config_.depth; ++i) {
    x = blocks_[static_cast<std::size_t>(i - 1)].forward(x);
    if (next_tap < config_.conv_after.size() && config_.conv_after[next_tap] == i) {
      if (config_.interleave_conv) x = conv_interleave(x, seq, registry, convs_[next_tap]);
      out.levels.push_back(i);
      out.taps.push_back(x);
      ++next_tap;
    }
  }
  return out;
}

std::vector<Tensor> Encoder::encode_plain(const Tensor& tokens) const {
  std::vector<Tensor> taps;
  Tensor x = tokens;
  std::size_t next_tap = 0;
  for (std::int64_t i = 1; i <= config_.depth; ++i) {
    x = blocks_[static_cast<std::size_t>(i - 1)].forward(x);
    if (next_tap < config_.conv_after.size() && config_.conv_after[next_tap] == i) {
      taps.push_back(x);
      ++next_tap;
    }
  }
  return taps;
}

}  // namespace vivit
