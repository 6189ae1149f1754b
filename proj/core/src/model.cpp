#include "vivit/model.hpp"

#include "vivit/errors.hpp"

namespace vivit {

namespace {

const ModelConfig& checked(const ModelConfig& config) {
  const auto errors = config.validate();
  if (!errors.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return config;
}

}  // namespace

VivitModel::VivitModel(const ModelConfig& config, std::uint64_t seed, ModelHeads heads, DType dtype)
    : config_(checked(config)),
      heads_(heads),
      params_(seed, dtype),
      registry_(params_, config.modality_dim, config.embed_dim),
      tokenizer_(params_, config),
      encoder_(params_, config) {
  if (heads != ModelHeads::kSegment) mae_.emplace(params_, config);
  if (heads != ModelHeads::kPretrain) {
    bank_.emplace(params_, config.embed_dim, config.heads);
    decoder_.emplace(params_, config);
  }
}

const MaeDecoder& VivitModel::mae() const {
  if (!mae_) throw ConfigError("model has no MAE decoder");
  return *mae_;
}

LevelAttentionBank& VivitModel::bank() {
  if (!bank_) throw ConfigError("model has no segmentation head");
  return *bank_;
}

const LevelAttentionBank& VivitModel::bank() const {
  if (!bank_) throw ConfigError("model has no segmentation head");
  return *bank_;
}

const CnnDecoder& VivitModel::decoder() const {
  if (!decoder_) throw ConfigError("model has no segmentation head");
  return *decoder_;
}

void VivitModel::ensure_bank_entries(const std::vector<std::string>& modalities) {
  for (const auto& name : modalities) {
    registry_.id(name);
    for (const std::int64_t level : config_.conv_after) bank().get(name, level);
  }
}

StudyTensors VivitModel::as_model_dtype(const StudyTensors& study) const {
  StudyTensors out = study;
  for (auto& mv : out.volumes) {
    if (mv.volume.dtype() != dtype()) mv.volume = mv.volume.to(dtype());
  }
  if (out.label && out.label->dtype() != dtype()) out.label = out.label->to(dtype());
  return out;
}

std::pair<TokenSequence, Stage1Features> VivitModel::tokenize(const StudyTensors& study) const {
  return tokenizer_.tokenize(as_model_dtype(study), registry_);
}

EncodedStudy VivitModel::encode(const StudyTensors& study, const Tensor& tokens_override) const {
  auto [seq, stage1] = tokenize(study);
  FeaturePyramid pyramid = encoder_.encode(seq, std::move(stage1), registry_, tokens_override);
  return EncodedStudy{std::move(seq), std::move(pyramid)};
}

ReconstructionOutput VivitModel::reconstruct(const StudyTensors& study, const MaskPlan& plan) const {
  const StudyTensors local = as_model_dtype(study);
  auto [seq, stage1] = tokenizer_.tokenize(local, registry_);
  const Tensor masked = apply_mask(seq, plan, mae().mask_token());
  const FeaturePyramid pyramid = encoder_.encode(seq, std::move(stage1), registry_, masked);
  ReconstructionOutput out;
  out.predictions = mae().forward(pyramid.deepest());
  out.targets = reconstruction_targets(local, config_.patch);
  out.loss = masked_l2_loss(out.predictions, out.targets, plan);
  return out;
}

Tensor VivitModel::segment(const StudyTensors& study) {
  EncodedStudy encoded = encode(study);
  std::vector<Tensor> fused;
  for (std::size_t k = 0; k < encoded.pyramid.levels.size(); ++k) {
    fused.push_back(fuse_level(encoded.pyramid.taps[k], encoded.sequence, bank(), encoded.pyramid.levels[k]));
  }
  return decoder().forward(fused, fuse_stage1(encoded.pyramid.stage1));
}

}  // namespace vivit
