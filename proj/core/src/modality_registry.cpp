#include "vivit/modality_registry.hpp"

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

namespace vivit {

namespace {
constexpr double kModalityInitStd = 0.02;
}

ModalityRegistry::ModalityRegistry(ParameterSet& params, std::int64_t vector_dim, std::int64_t embed_dim)
    : params_(params), vector_dim_(vector_dim), embed_dim_(embed_dim) {}

ModalityId ModalityRegistry::register_modality(const std::string& name) {
  if (name.empty()) throw ConfigError("modality name must be non-empty");
  if (auto existing = find(name)) return *existing;
  ModalityEntry entry;
  entry.id = ModalityId{name, static_cast<int>(entries_.size())};
  const auto vec_name = vector_param(name);
  const auto emb_name = embedding_param(name);
  // Tensors may already exist when a checkpoint was loaded into the set.
  entry.vector = params_.contains(vec_name)
                     ? params_.at(vec_name)
                     : params_.create(vec_name, {vector_dim_}, InitSpec::normal(kModalityInitStd));
  entry.embedding = params_.contains(emb_name)
                        ? params_.at(emb_name)
                        : params_.create(emb_name, {embed_dim_}, InitSpec::normal(kModalityInitStd));
  by_name_.emplace(name, entry.id.index);
  entries_.push_back(std::move(entry));
  return entries_.back().id;
}

std::optional<ModalityId> ModalityRegistry::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return entries_[static_cast<std::size_t>(it->second)].id;
}

ModalityId ModalityRegistry::id(const std::string& name) const {
  auto found = find(name);
  if (!found) throw ConfigError("modality '" + name + "' is not registered");
  return *found;
}

const ModalityEntry& ModalityRegistry::entry(const ModalityId& id) const {
  if (id.index < 0 || static_cast<std::size_t>(id.index) >= entries_.size()) {
    throw ConfigError("modality index " + std::to_string(id.index) + " out of range");
  }
  return entries_[static_cast<std::size_t>(id.index)];
}

std::vector<std::string> ModalityRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.id.name);
  return out;
}

DynamicScales project_dynamic_params(const Tensor& modality_vector, const DynamicProjection& proj) {
  if (modality_vector.rank() != 1) {
    throw ShapeError("project_dynamic_params: modality vector must be rank 1, got " +
                     shape_str(modality_vector.shape()));
  }
  const std::int64_t l = modality_vector.dim(0);
  for (const Tensor* p : {&proj.weight_proj, &proj.bias_proj}) {
    if (p->rank() != 2 || p->dim(1) != l) {
      throw ShapeError("project_dynamic_params: projection " + shape_str(p->shape()) +
                       " does not accept a modality vector of length " + std::to_string(l));
    }
  }
  const Tensor column = ops::reshape(modality_vector, {l, 1});
  auto project = [&](const Tensor& p) {
    return ops::add_scalar(ops::reshape(ops::matmul(p, column), {p.dim(0)}), 1.0);
  };
  return DynamicScales{project(proj.weight_proj), project(proj.bias_proj)};
}

}  // namespace vivit
