#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vivit/encoder.hpp"
#include "vivit/layers.hpp"
#include "vivit/model_config.hpp"

namespace vivit {

/// Per-(modality, level) attention blocks, created on first use.
///
/// Parameter names are "bank.<modality>.z<level>.*"; because initial values
/// depend only on the name, lazy creation order does not matter.
class LevelAttentionBank {
 public:
  LevelAttentionBank(ParameterSet& params, std::int64_t dim, std::int64_t heads);

  const AttentionBlock& get(const std::string& modality, std::int64_t level);
  bool contains(const std::string& modality, std::int64_t level) const;
  std::vector<std::pair<std::string, std::int64_t>> entries() const;
  static std::string prefix(const std::string& modality, std::int64_t level);

 private:
  ParameterSet* params_;
  std::int64_t dim_;
  std::int64_t heads_;
  std::map<std::pair<std::string, std::int64_t>, AttentionBlock> blocks_;
};

// Positionwise mean over modalities of each span's attention-block output,
// reshaped to the token grid: [T, gx, gy, gz].
Tensor fuse_level(const Tensor& tap, const TokenSequence& seq, LevelAttentionBank& bank, std::int64_t level);

// Mean of the per-modality stage-1 maps.
Tensor fuse_stage1(const Stage1Features& stage1);

/// UNETR-style decoder from fused token grids to full-resolution logits.
///
/// The deepest fused level is the bottleneck. Each shallower level is brought
/// to its join resolution by up-convolutions and joined with the upsampled
/// main path; the last join also takes the fused stage-1 map at H/2. A final
/// up-convolution restores H and a 1x1x1 head emits num_classes channels.
class CnnDecoder {
 public:
  CnnDecoder(ParameterSet& params, const ModelConfig& config);

  // fused[k] for taps in ascending level order, each [T, gx, gy, gz].
  Tensor forward(const std::vector<Tensor>& fused, const Tensor& stage1) const;

 private:
  struct SkipStage {
    std::vector<UpConv3d> skip_ups;
    std::vector<ConvBlock> skip_blocks;
    std::vector<UpConv3d> main_ups;
    ConvBlock join;
  };

  std::size_t levels_ = 0;
  ConvBlock bottleneck_;
  std::vector<SkipStage> stages_;  // stage s joins tap levels_-1-s
  UpConv3d final_up_;
  ConvBlock final_block_;
  Conv3d head_;
};

}  // namespace vivit
