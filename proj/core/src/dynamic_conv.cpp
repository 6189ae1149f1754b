#include "vivit/dynamic_conv.hpp"

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

namespace vivit {

DynamicConv3d::DynamicConv3d(ParameterSet& params, const std::string& prefix,
                             const DynamicConvSpec& spec, std::int64_t modality_dim)
    : spec_(spec) {
  const std::int64_t k = spec.kernel;
  if (k < 1 || spec.stride < 1 || spec.padding < 0 || spec.in_channels < 1 || spec.out_channels < 1) {
    throw ConfigError("dynamic conv '" + prefix + "': invalid geometry");
  }
  weight_ = params.create(prefix + ".weight", {spec.out_channels, spec.in_channels, k, k, k},
                          InitSpec::fan_in_uniform(spec.in_channels * k * k * k));
  bias_ = params.create(prefix + ".bias", {spec.out_channels}, InitSpec::zeros());
  proj_.weight_proj = params.create(prefix + ".weight_proj", {spec.out_channels, modality_dim}, InitSpec::zeros());
  proj_.bias_proj = params.create(prefix + ".bias_proj", {spec.out_channels, modality_dim}, InitSpec::zeros());
}

std::pair<Tensor, Tensor> DynamicConv3d::updated_parameters(const Tensor& modality_vector) const {
  const DynamicScales scales = project_dynamic_params(modality_vector, proj_);
  return {ops::scale_leading(weight_, scales.weight_scale), ops::mul(bias_, scales.bias_scale)};
}

Tensor DynamicConv3d::forward(const Tensor& x, const Tensor& modality_vector) const {
  const auto [weight, bias] = updated_parameters(modality_vector);
  return ops::conv3d(x, weight, bias, spec_.stride, spec_.padding);
}

}  // namespace vivit
