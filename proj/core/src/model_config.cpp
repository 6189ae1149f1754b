#include "vivit/model_config.hpp"

#include <algorithm>

#include "vivit/errors.hpp"

namespace vivit {

namespace {

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

std::vector<std::string> ModelConfig::validate() const {
  std::vector<std::string> errors;
  auto fail = [&](std::string msg) { errors.push_back(std::move(msg)); };

  if (patch < 2 || !is_power_of_two(patch)) fail("patch: must be a power of two >= 2");
  for (std::size_t a = 0; a < 3; ++a) {
    if (volume[a] < 1) {
      fail("volume: extents must be positive");
    } else if (patch >= 2 && volume[a] % patch != 0) {
      fail("volume: extent " + std::to_string(volume[a]) + " not divisible by patch " + std::to_string(patch));
    }
  }
  if (embed_dim < 4) fail("embed_dim: must be >= 4");
  if (heads < 1 || (embed_dim > 0 && embed_dim % heads != 0)) fail("heads: must divide embed_dim");
  if (stage1_channels < 1) fail("stage1_channels: must be >= 1");
  if (modality_dim < 1) fail("modality_dim: must be >= 1");
  if (mlp_ratio < 1) fail("mlp_ratio: must be >= 1");
  if (depth < 1) fail("depth: must be >= 1");
  if (conv_after.size() < 2) fail("conv_after: at least two encoder taps are required");
  for (std::size_t i = 0; i < conv_after.size(); ++i) {
    if (conv_after[i] < 1 || conv_after[i] > depth) {
      fail("conv_after: block index " + std::to_string(conv_after[i]) + " outside 1.." + std::to_string(depth));
    }
    if (i > 0 && conv_after[i] <= conv_after[i - 1]) fail("conv_after: indices must be strictly increasing");
  }
  if (conv_after.size() >= 2) {
    const std::int64_t spacing = conv_after[1] - conv_after[0];
    bool uniform = spacing > 0 && conv_after[0] == spacing;
    for (std::size_t i = 1; i < conv_after.size(); ++i) {
      uniform = uniform && conv_after[i] - conv_after[i - 1] == spacing;
    }
    if (uniform && depth % spacing != 0) fail("depth: not divisible by the tap spacing");
  }
  if (mae_depth < 1) fail("mae_depth: must be >= 1");
  const std::int64_t dec = decoder_dim();
  if (dec < 1) fail("mae_dim: must be positive");
  if (mae_heads < 1 || (dec > 0 && dec % mae_heads != 0)) fail("mae_heads: must divide the MAE decoder dim");
  if (num_classes < 1) fail("num_classes: must be >= 1");
  return errors;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.volume = {16, 16, 16};
  c.patch = 4;
  c.embed_dim = 64;
  c.stage1_channels = 16;
  c.modality_dim = 16;
  c.depth = 4;
  c.heads = 4;
  c.conv_after = {1, 2, 3, 4};
  c.mae_depth = 2;
  c.mae_dim = 64;
  c.mae_heads = 4;
  return c;
}

const char* tokenizer_name(TokenizerKind kind) {
  return kind == TokenizerKind::kVitPatch ? "vit" : "dynamic";
}

TokenizerKind parse_tokenizer(const std::string& name) {
  if (name == "dynamic") return TokenizerKind::kDynamic;
  if (name == "vit") return TokenizerKind::kVitPatch;
  throw ConfigError("tokenizer: expected 'dynamic' or 'vit', got '" + name + "'");
}

}  // namespace vivit
