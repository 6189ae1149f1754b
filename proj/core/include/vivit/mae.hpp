#pragma once

#include <cstdint>
#include <vector>

#include "vivit/layers.hpp"
#include "vivit/model_config.hpp"
#include "vivit/rng.hpp"
#include "vivit/study.hpp"
#include "vivit/tokenizer.hpp"

namespace vivit {

struct MaskPlan {
  std::vector<std::int64_t> masked_indices;  // sorted, unique
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::int64_t total = 0;
};

// floor(ratio * total) indices drawn uniformly without replacement from the
// whole sequence. Reproducible from (total, ratio, seed).
MaskPlan make_mask_plan(std::int64_t total, double ratio, std::uint64_t seed);

struct MaskedSequence {
  Tensor tokens;  // [L_total, T]
  MaskPlan plan;
};

// Replaces the planned rows with mask_token + that row's positional and
// modality embedding. Unmasked rows are passed through unchanged.
Tensor apply_mask(const TokenSequence& seq, const MaskPlan& plan, const Tensor& mask_token);

// Draws a plan seed from `rng`, then applies it.
MaskedSequence mask_tokens(const TokenSequence& seq, double ratio, Rng& rng, const Tensor& mask_token);

// volume [1,H,W,D] -> [J, P^3]; rows in lexicographic grid order, voxels
// within a patch in (dx, dy, dz) order with dz fastest.
Tensor patchify(const Tensor& volume, std::int64_t patch);
// Inverse of patchify for a single-channel volume.
Tensor unpatchify(const Tensor& patches, std::int64_t patch, const ops::Extent3& volume);

// Reconstruction targets for every token of the study, in span order.
Tensor reconstruction_targets(const StudyTensors& study, std::int64_t patch);

// Mean squared error over the elements of masked rows only.
Tensor masked_l2_loss(const Tensor& pred, const Tensor& targets, const MaskPlan& plan);

/// Lightweight transformer decoder from encoder tokens to voxel patches.
///
/// The head starts at zero, so an untrained decoder predicts zero for every
/// voxel and the step-0 loss is the energy of the masked targets.
class MaeDecoder {
 public:
  MaeDecoder(ParameterSet& params, const ModelConfig& config);

  // [L,T] -> [L,P^3]; L must be a whole number of grid-ordered spans.
  Tensor forward(const Tensor& encoded) const;
  const Tensor& mask_token() const { return mask_token_; }
  const Linear& head() const { return head_; }

 private:
  Tensor mask_token_;
  Linear embed_;
  Tensor positions_;  // [J, T_dec], shared by all spans
  std::vector<TransformerBlock> blocks_;
  Linear head_;
};

}  // namespace vivit
