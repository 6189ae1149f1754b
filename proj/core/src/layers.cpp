#include "vivit/layers.hpp"

#include <cmath>

#include "vivit/errors.hpp"
#include "vivit/ops.hpp"

namespace vivit {

Linear::Linear(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out,
               InitSpec weight_init)
    : weight_(params.create(prefix + ".weight", {in, out}, weight_init)),
      bias_(params.create(prefix + ".bias", {out}, InitSpec::zeros())) {}

Linear::Linear(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out)
    : Linear(params, prefix, in, out, InitSpec::xavier(in, out)) {}

Tensor Linear::forward(const Tensor& x) const { return ops::linear(x, weight_, bias_); }

LayerNorm::LayerNorm(ParameterSet& params, const std::string& prefix, std::int64_t dim)
    : gain_(params.create(prefix + ".gain", {dim}, InitSpec::ones())),
      bias_(params.create(prefix + ".bias", {dim}, InitSpec::zeros())) {}

Tensor LayerNorm::forward(const Tensor& x) const { return ops::layer_norm(x, gain_, bias_, 1e-5); }

MultiHeadAttention::MultiHeadAttention(ParameterSet& params, const std::string& prefix,
                                       std::int64_t dim, std::int64_t heads)
    : dim_(dim), heads_(heads) {
  if (heads < 1 || dim % heads != 0) {
    throw ShapeError("attention: embedding dim " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  q_ = Linear(params, prefix + ".query", dim, dim);
  k_ = Linear(params, prefix + ".key", dim, dim);
  v_ = Linear(params, prefix + ".value", dim, dim);
  o_ = Linear(params, prefix + ".out", dim, dim);
}

Tensor MultiHeadAttention::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != dim_) {
    throw ShapeError("attention: expected [L," + std::to_string(dim_) + "], got " + shape_str(x.shape()));
  }
  if (x.dim(0) < 1) throw ShapeError("attention: empty sequence");
  const std::int64_t len = x.dim(0);
  const std::int64_t head_dim = dim_ / heads_;
  const Tensor q = ops::permute(ops::reshape(q_.forward(x), {len, heads_, head_dim}), {1, 0, 2});
  const Tensor k = ops::permute(ops::reshape(k_.forward(x), {len, heads_, head_dim}), {1, 2, 0});
  const Tensor v = ops::permute(ops::reshape(v_.forward(x), {len, heads_, head_dim}), {1, 0, 2});
  const Tensor scores = ops::scale(ops::bmm(q, k), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  const Tensor context = ops::bmm(ops::softmax(scores, 2), v);  // [H,L,dh]
  const Tensor merged = ops::reshape(ops::permute(context, {1, 0, 2}), {len, dim_});
  return o_.forward(merged);
}

AttentionBlock::AttentionBlock(ParameterSet& params, const std::string& prefix, std::int64_t dim,
                               std::int64_t heads)
    : norm_(params, prefix + ".norm", dim), attn_(params, prefix + ".attn", dim, heads) {}

Tensor AttentionBlock::forward(const Tensor& x) const {
  return ops::add(x, attn_.forward(norm_.forward(x)));
}

TransformerBlock::TransformerBlock(ParameterSet& params, const std::string& prefix, std::int64_t dim,
                                   std::int64_t heads, std::int64_t mlp_ratio)
    : norm1_(params, prefix + ".norm1", dim),
      attn_(params, prefix + ".attn", dim, heads),
      norm2_(params, prefix + ".norm2", dim),
      fc1_(params, prefix + ".mlp.fc1", dim, dim * mlp_ratio),
      fc2_(params, prefix + ".mlp.fc2", dim * mlp_ratio, dim) {}

Tensor TransformerBlock::forward(const Tensor& x) const {
  const Tensor y = ops::add(x, attn_.forward(norm1_.forward(x)));
  return ops::add(y, fc2_.forward(ops::gelu(fc1_.forward(norm2_.forward(y)))));
}

Conv3d::Conv3d(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out,
               std::int64_t kernel, std::int64_t stride, std::int64_t padding)
    : weight_(params.create(prefix + ".weight", {out, in, kernel, kernel, kernel},
                            InitSpec::fan_in_uniform(in * kernel * kernel * kernel))),
      bias_(params.create(prefix + ".bias", {out}, InitSpec::zeros())),
      stride_(stride),
      padding_(padding) {}

Tensor Conv3d::forward(const Tensor& x) const { return ops::conv3d(x, weight_, bias_, stride_, padding_); }

UpConv3d::UpConv3d(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out)
    : weight_(params.create(prefix + ".weight", {in, out, 2, 2, 2}, InitSpec::fan_in_uniform(in * 8))),
      bias_(params.create(prefix + ".bias", {out}, InitSpec::zeros())) {}

Tensor UpConv3d::forward(const Tensor& x) const { return ops::conv_transpose3d(x, weight_, bias_, 2); }

ConvBlock::ConvBlock(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out)
    : conv_(params, prefix + ".conv", in, out, 3, 1, 1) {}

Tensor ConvBlock::forward(const Tensor& x) const {
  return ops::leaky_relu(ops::instance_norm(conv_.forward(x)), 0.01);
}

}  // namespace vivit
