#pragma once

#include <compare>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vivit/parameters.hpp"
#include "vivit/tensor.hpp"

namespace vivit {

struct ModalityId {
  std::string name;
  int index = -1;

  friend bool operator==(const ModalityId&, const ModalityId&) = default;
  friend auto operator<=>(const ModalityId& a, const ModalityId& b) { return a.index <=> b.index; }
};

struct ModalityEntry {
  ModalityId id;
  Tensor vector;     // m, length l; drives the dynamic-conv scalings
  Tensor embedding;  // e, length T; added to every token of this modality
};

/// Learned per-modality parameters, indexed in registration order.
///
/// Registration is idempotent and never touches existing entries, so new
/// contrasts can be added at finetune time next to pretrained ones.
class ModalityRegistry {
 public:
  ModalityRegistry(ParameterSet& params, std::int64_t vector_dim, std::int64_t embed_dim);

  ModalityId register_modality(const std::string& name);
  std::optional<ModalityId> find(const std::string& name) const;
  // Throws ConfigError for unregistered names.
  ModalityId id(const std::string& name) const;
  const ModalityEntry& entry(const ModalityId& id) const;
  const ModalityEntry& entry(const std::string& name) const { return entry(id(name)); }

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::int64_t vector_dim() const { return vector_dim_; }
  std::int64_t embed_dim() const { return embed_dim_; }

  static std::string vector_param(const std::string& name) { return "modality." + name + ".vector"; }
  static std::string embedding_param(const std::string& name) { return "modality." + name + ".embedding"; }

 private:
  ParameterSet& params_;
  std::int64_t vector_dim_;
  std::int64_t embed_dim_;
  std::vector<ModalityEntry> entries_;
  std::unordered_map<std::string, int> by_name_;
};

// Per-layer linear maps from a modality vector to per-output-channel scalings.
struct DynamicProjection {
  Tensor weight_proj;  // P_w [C_out, l]
  Tensor bias_proj;    // P_b [C_out, l]
};

struct DynamicScales {
  Tensor weight_scale;  // w_conv [C_out]
  Tensor bias_scale;    // b_conv [C_out]
};

// w_conv = 1 + P_w m, b_conv = 1 + P_b m.
DynamicScales project_dynamic_params(const Tensor& modality_vector, const DynamicProjection& proj);

}  // namespace vivit
