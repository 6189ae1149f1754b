#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vivit/encoder.hpp"
#include "vivit/fusion_decoder.hpp"
#include "vivit/mae.hpp"
#include "vivit/modality_registry.hpp"
#include "vivit/model_config.hpp"
#include "vivit/parameters.hpp"
#include "vivit/study.hpp"
#include "vivit/tokenizer.hpp"

namespace vivit {

// Which task heads a model instance carries next to the shared trunk
// (registry, tokenizer, encoder).
enum class ModelHeads {
  kPretrain,  // MAE decoder
  kSegment,   // attention bank + CNN decoder
  kAll,
};

struct EncodedStudy {
  TokenSequence sequence;
  FeaturePyramid pyramid;
};

struct ReconstructionOutput {
  Tensor predictions;  // [L_total, P^3]
  Tensor targets;      // [L_total, P^3]
  Tensor loss;         // masked L2, scalar
};

/// Complete model: one ParameterSet holding every learnable tensor.
///
/// Not copyable or movable; components keep handles into the set.
class VivitModel {
 public:
  VivitModel(const ModelConfig& config, std::uint64_t seed, ModelHeads heads = ModelHeads::kAll,
             DType dtype = DType::kFloat32);
  VivitModel(const VivitModel&) = delete;
  VivitModel& operator=(const VivitModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ModelHeads heads() const { return heads_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  ModalityRegistry& registry() { return registry_; }
  const ModalityRegistry& registry() const { return registry_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  const Encoder& encoder() const { return encoder_; }
  bool has_mae() const { return mae_.has_value(); }
  bool has_segmentation() const { return decoder_.has_value(); }
  const MaeDecoder& mae() const;
  LevelAttentionBank& bank();
  const LevelAttentionBank& bank() const;
  const CnnDecoder& decoder() const;

  ModalityId register_modality(const std::string& name) { return registry_.register_modality(name); }
  // Creates every bank entry a study needs ahead of a forward pass.
  void ensure_bank_entries(const std::vector<std::string>& modalities);

  EncodedStudy encode(const StudyTensors& study, const Tensor& tokens_override = Tensor()) const;
  std::pair<TokenSequence, Stage1Features> tokenize(const StudyTensors& study) const;

  // Tokenize, mask by plan, encode, decode and score against the study's
  // own normalized patches.
  ReconstructionOutput reconstruct(const StudyTensors& study, const MaskPlan& plan) const;
  // Logits [num_classes, H, W, D].
  Tensor segment(const StudyTensors& study);

  void cast(DType dtype) { params_.cast(dtype); }
  DType dtype() const { return params_.dtype(); }

 private:
  StudyTensors as_model_dtype(const StudyTensors& study) const;

  ModelConfig config_;
  ModelHeads heads_;
  ParameterSet params_;
  ModalityRegistry registry_;
  Tokenizer tokenizer_;
  Encoder encoder_;
  std::optional<MaeDecoder> mae_;
  std::optional<LevelAttentionBank> bank_;
  std::optional<CnnDecoder> decoder_;
};

}  // namespace vivit
