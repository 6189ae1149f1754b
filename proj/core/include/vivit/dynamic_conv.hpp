#pragma once

#include <cstdint>
#include <string>

#include "vivit/modality_registry.hpp"
#include "vivit/parameters.hpp"
#include "vivit/tensor.hpp"

namespace vivit {

struct DynamicConvSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
};

/// Modality-conditioned 3D convolution.
///
/// The modality vector m is projected to per-output-channel scalings
/// (w_conv, b_conv); output channel c is computed with kernel W[c]*w_conv[c]
/// and bias B[c]*b_conv[c]. Projections start at zero, so a fresh layer is
/// an ordinary shared convolution.
class DynamicConv3d {
 public:
  DynamicConv3d() = default;
  DynamicConv3d(ParameterSet& params, const std::string& prefix, const DynamicConvSpec& spec,
                std::int64_t modality_dim);

  // x[C_in,H,W,D], m[l] -> [C_out, H', W', D']
  Tensor forward(const Tensor& x, const Tensor& modality_vector) const;
  // Effective (W_updated, B_updated) for a modality vector.
  std::pair<Tensor, Tensor> updated_parameters(const Tensor& modality_vector) const;

  const DynamicConvSpec& spec() const { return spec_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  const DynamicProjection& projection() const { return proj_; }

 private:
  DynamicConvSpec spec_;
  Tensor weight_;
  Tensor bias_;
  DynamicProjection proj_;
};

}  // namespace vivit
