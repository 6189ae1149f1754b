#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "vivit/dynamic_conv.hpp"
#include "vivit/layers.hpp"
#include "vivit/model_config.hpp"
#include "vivit/modality_registry.hpp"
#include "vivit/study.hpp"

namespace vivit {

struct TokenMeta {
  int modality = -1;  // registry index
  std::int64_t px = 0;
  std::int64_t py = 0;
  std::int64_t pz = 0;
};

struct ModalitySpan {
  ModalityId modality;
  std::int64_t start = 0;
  std::int64_t length = 0;
};

/// Study-level token sequence: per-modality blocks concatenated in study order.
/// Inside a block, patch coordinates run over the grid in lexicographic
/// (px, py, pz) order, so row j of a block is patch (j / (gy*gz), ...).
struct TokenSequence {
  Tensor tokens;      // [L_total, T]
  Tensor embeddings;  // [L_total, T], positional + modality part of `tokens`
  std::vector<TokenMeta> meta;
  std::vector<ModalitySpan> spans;
  ops::Extent3 grid{};

  std::int64_t length() const { return tokens.dim(0); }
  std::int64_t grid_volume() const { return grid[0] * grid[1] * grid[2]; }
};

// Per-modality stage-1 feature maps [C, H/2, W/2, D/2], in span order.
struct Stage1Features {
  std::vector<ModalityId> modalities;
  std::vector<Tensor> maps;
};

/// Two-stage dynamic patch tokenizer.
///
/// Stage 1: dynamic conv 1->C, kernel 7, stride 2, padding 3.
/// Stage 2: dynamic conv C->T, kernel = stride = P/2, so the token grid is
/// H/P x W/P x D/P in original voxels. A learned positional table (one row
/// per grid cell, shared across modalities) and the modality embedding are
/// added to every token.
class Tokenizer {
 public:
  Tokenizer(ParameterSet& params, const ModelConfig& config);

  std::pair<TokenSequence, Stage1Features> tokenize(const StudyTensors& study,
                                                    const ModalityRegistry& registry) const;

  // Row of the positional table for a patch coordinate.
  Tensor positional_embedding(std::int64_t px, std::int64_t py, std::int64_t pz) const;
  const Tensor& positional_table() const { return positions_; }
  const DynamicConv3d& stage1() const { return stage1_; }
  const DynamicConv3d& stage2() const { return stage2_; }

 private:
  ModelConfig config_;
  DynamicConv3d stage1_;
  DynamicConv3d stage2_;
  Conv3d vit_skip_;   // kVitPatch only: stage-1 skip features for the decoder
  Conv3d vit_patch_;  // kVitPatch only: P^3 linear patch embedding
  Tensor positions_;  // [J, T]
};

// [T, gx, gy, gz] feature map -> [J, T] rows in lexicographic coordinate order.
Tensor grid_to_rows(const Tensor& grid_map);
// Inverse of grid_to_rows.
Tensor rows_to_grid(const Tensor& rows, const ops::Extent3& grid);

}  // namespace vivit
