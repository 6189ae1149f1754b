#include "vivit/tokenizer.hpp"

#include <unordered_set>

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

namespace vivit {

namespace {
constexpr std::int64_t kStage1Kernel = 7;
constexpr std::int64_t kStage1Stride = 2;
constexpr std::int64_t kStage1Padding = 3;
constexpr double kPositionInitStd = 0.02;
}  // namespace

Tensor grid_to_rows(const Tensor& grid_map) {
  if (grid_map.rank() != 4) throw ShapeError("grid_to_rows: expected [T,gx,gy,gz], got " + shape_str(grid_map.shape()));
  const std::int64_t t = grid_map.dim(0);
  const std::int64_t j = grid_map.dim(1) * grid_map.dim(2) * grid_map.dim(3);
  return ops::transpose(ops::reshape(grid_map, {t, j}));
}

Tensor rows_to_grid(const Tensor& rows, const ops::Extent3& grid) {
  if (rows.rank() != 2 || rows.dim(0) != grid[0] * grid[1] * grid[2]) {
    throw ShapeError("rows_to_grid: " + shape_str(rows.shape()) + " does not cover grid " +
                     shape_str({grid[0], grid[1], grid[2]}));
  }
  return ops::reshape(ops::transpose(rows), {rows.dim(1), grid[0], grid[1], grid[2]});
}

Tokenizer::Tokenizer(ParameterSet& params, const ModelConfig& config) : config_(config) {
  const std::int64_t t = config.embed_dim;
  const std::int64_t c = config.stage1_channels;
  const std::int64_t half_patch = config.patch / 2;
  if (config.tokenizer == TokenizerKind::kDynamic) {
    stage1_ = DynamicConv3d(params, "tokenizer.stage1",
                            {1, c, kStage1Kernel, kStage1Stride, kStage1Padding}, config.modality_dim);
    stage2_ = DynamicConv3d(params, "tokenizer.stage2", {c, t, half_patch, half_patch, 0},
                            config.modality_dim);
  } else {
    vit_skip_ = Conv3d(params, "tokenizer.vit_skip", 1, c, kStage1Kernel, kStage1Stride, kStage1Padding);
    vit_patch_ = Conv3d(params, "tokenizer.vit_patch", 1, t, config.patch, config.patch, 0);
  }
  positions_ = params.create("tokenizer.position", {config.tokens_per_modality(), t},
                             InitSpec::normal(kPositionInitStd));
}

Tensor Tokenizer::positional_embedding(std::int64_t px, std::int64_t py, std::int64_t pz) const {
  const auto g = config_.grid();
  if (px < 0 || py < 0 || pz < 0 || px >= g[0] || py >= g[1] || pz >= g[2]) {
    throw ShapeError("positional_embedding: coordinate (" + std::to_string(px) + "," + std::to_string(py) +
                     "," + std::to_string(pz) + ") outside grid");
  }
  const std::int64_t row = (px * g[1] + py) * g[2] + pz;
  return ops::reshape(ops::slice_rows(positions_, row, 1), {config_.embed_dim});
}

std::pair<TokenSequence, Stage1Features> Tokenizer::tokenize(const StudyTensors& study,
                                                             const ModalityRegistry& registry) const {
  if (study.volumes.empty()) throw ConfigError("study '" + study.id + "' has no volumes");
  const auto g = config_.grid();
  const std::int64_t j = config_.tokens_per_modality();
  const Shape expected{1, config_.volume[0], config_.volume[1], config_.volume[2]};

  TokenSequence seq;
  seq.grid = g;
  Stage1Features stage1;
  std::vector<Tensor> blocks;
  std::vector<Tensor> embeds;
  std::unordered_set<std::string> seen;
  for (const auto& mv : study.volumes) {
    if (!seen.insert(mv.modality).second) {
      throw ConfigError("study '" + study.id + "' lists modality '" + mv.modality + "' twice");
    }
    if (mv.volume.shape() != expected) {
      throw ShapeError("tokenize: volume " + mv.modality + " has shape " + shape_str(mv.volume.shape()) +
                       ", model expects " + shape_str(expected));
    }
    const ModalityId id = registry.id(mv.modality);
    const ModalityEntry& entry = registry.entry(id);

    Tensor features;
    Tensor patches;
    if (config_.tokenizer == TokenizerKind::kDynamic) {
      features = stage1_.forward(mv.volume, entry.vector);
      patches = stage2_.forward(features, entry.vector);
    } else {
      features = vit_skip_.forward(mv.volume);
      patches = vit_patch_.forward(mv.volume);
    }
    const Tensor embed = ops::add_bias(positions_, entry.embedding);
    blocks.push_back(ops::add(grid_to_rows(patches), embed));
    embeds.push_back(embed);
    stage1.modalities.push_back(id);
    stage1.maps.push_back(features);

    seq.spans.push_back(ModalitySpan{id, static_cast<std::int64_t>(seq.meta.size()), j});
    for (std::int64_t x = 0; x < g[0]; ++x) {
      for (std::int64_t y = 0; y < g[1]; ++y) {
        for (std::int64_t z = 0; z < g[2]; ++z) seq.meta.push_back(TokenMeta{id.index, x, y, z});
      }
    }
  }
  seq.tokens = ops::concat_rows(blocks);
  seq.embeddings = ops::concat_rows(embeds);
  return {std::move(seq), std::move(stage1)};
}

}  // namespace vivit
