#pragma once

#include <cstdint>
#include <vector>

#include "vivit/dynamic_conv.hpp"
#include "vivit/layers.hpp"
#include "vivit/model_config.hpp"
#include "vivit/tokenizer.hpp"

namespace vivit {

// Encoder outputs at every tap level, plus the tokenizer's stage-1 maps.
struct FeaturePyramid {
  std::vector<std::int64_t> levels;  // 1-based block indices, ascending
  std::vector<Tensor> taps;          // [L_total, T] each
  Stage1Features stage1;

  const Tensor& tap(std::int64_t level) const;
  const Tensor& deepest() const { return taps.back(); }
};

/// Per-span dynamic convolution over re-gridded tokens with a residual add.
///
/// Each modality span is reshaped to [T, gx, gy, gz], convolved with that
/// modality's vector, added back and flattened in the same order.
Tensor conv_interleave(const Tensor& x, const TokenSequence& seq, const ModalityRegistry& registry,
                       const DynamicConv3d& layer);

/// Transformer-convolution encoder: global attention over the concatenated
/// sequence, with a dynamic conv after every tap block.
class Encoder {
 public:
  Encoder(ParameterSet& params, const ModelConfig& config);

  // Runs the blocks over seq.tokens (or `tokens` if given, e.g. after masking).
  FeaturePyramid encode(const TokenSequence& seq, Stage1Features stage1, const ModalityRegistry& registry,
                        const Tensor& tokens = Tensor()) const;

  // Transformer-only reference path; outputs after each tap block.
  std::vector<Tensor> encode_plain(const Tensor& tokens) const;

  const std::vector<TransformerBlock>& blocks() const { return blocks_; }
  const std::vector<DynamicConv3d>& convs() const { return convs_; }

 private:
  ModelConfig config_;
  std::vector<TransformerBlock> blocks_;
  std::vector<DynamicConv3d> convs_;  // one per tap, in tap order
};

}  // namespace vivit
