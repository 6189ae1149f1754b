#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vivit/ops.hpp"

namespace vivit {

enum class TokenizerKind {
  kDynamic,   // two-stage dynamic tokenizer
  kVitPatch,  // static linear patch embedding (ablation baseline)
};

struct ModelConfig {
  ops::Extent3 volume{16, 16, 16};
  std::int64_t patch = 4;             // P, in original voxels
  std::int64_t embed_dim = 64;        // T
  std::int64_t stage1_channels = 16;  // C
  std::int64_t modality_dim = 16;     // l
  std::int64_t depth = 12;
  std::int64_t heads = 4;
  std::int64_t mlp_ratio = 4;
  // 1-based block indices followed by a dynamic conv; each is an encoder tap.
  std::vector<std::int64_t> conv_after{3, 6, 9, 12};
  bool interleave_conv = true;
  TokenizerKind tokenizer = TokenizerKind::kDynamic;
  std::int64_t mae_depth = 2;
  std::int64_t mae_dim = 0;  // 0 selects embed_dim / 2
  std::int64_t mae_heads = 4;
  std::int64_t num_classes = 1;

  ops::Extent3 grid() const { return {volume[0] / patch, volume[1] / patch, volume[2] / patch}; }
  std::int64_t tokens_per_modality() const {
    const auto g = grid();
    return g[0] * g[1] * g[2];
  }
  std::int64_t decoder_dim() const { return mae_dim > 0 ? mae_dim : embed_dim / 2; }

  // Every violated constraint, one message each; empty when valid.
  std::vector<std::string> validate() const;

  // Depth-4 desk-scale configuration used by tests.
  static ModelConfig desk();
};

const char* tokenizer_name(TokenizerKind kind);
TokenizerKind parse_tokenizer(const std::string& name);

}  // namespace vivit
