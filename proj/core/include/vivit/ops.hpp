#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "vivit/tensor.hpp"

// Differentiable tensor operations.
//
// Broadcasting is limited to bias-add (add_bias, scale_leading) and scalar
// scaling; everything else requires exactly conforming shapes. Every op
// rejects NaN/Inf in its output with NumericError.
namespace vivit::ops {

using Extent3 = std::array<std::int64_t, 3>;

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

// x[..., N] + bias[N] along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x[C, ...] with slice c multiplied by s[c].
Tensor scale_leading(const Tensor& x, const Tensor& s);

Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K] x [K,N]
Tensor bmm(const Tensor& a, const Tensor& b);     // [B,M,K] x [B,K,N]
// x[L,in] * w[in,out] + b[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor transpose(const Tensor& x);  // 2-D only

Tensor softmax(const Tensor& x, std::size_t axis);
// Normalizes over the last axis with learned gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Per-channel normalization over all trailing axes of x[C, ...] (no affine).
Tensor instance_norm(const Tensor& x, double eps = 1e-5);

Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.01);

Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar
Tensor sum_over_axis(const Tensor& x, std::size_t axis);
Tensor mean_over_axis(const Tensor& x, std::size_t axis);

// Row ops treat axis 0 as rows and everything else as the row payload.
Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> rows);
// Copy of base with base[rows[i]] replaced by replacement[i].
Tensor replace_rows(const Tensor& base, std::span<const std::int64_t> rows,
                    const Tensor& replacement);
// v[N] -> [count, N]
Tensor repeat_rows(const Tensor& v, std::int64_t count);
Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t length);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Cross-correlation. x[C_in,H,W,D], w[C_out,C_in,k,k,k], b[C_out].
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride,
              std::int64_t padding);
// Adjoint of conv3d with zero padding. x[C_in,H,W,D], w[C_in,C_out,k,k,k];
// output extent (H-1)*stride + k.
Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride);

// Align-corners-false trilinear interpolation of x[C,H,W,D].
Tensor trilinear_resize(const Tensor& x, const Extent3& target);

}  // namespace vivit::ops
