#pragma once

#include <cstdint>
#include <string>

#include "vivit/parameters.hpp"
#include "vivit/tensor.hpp"

// Building blocks shared by the encoder, the MAE decoder and the fusion
// decoder. Each layer holds handles into a ParameterSet; the set owns the
// storage. Parameter names are "<prefix>.<field>".
namespace vivit {

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out,
         InitSpec weight_init);
  Linear(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out);

  Tensor forward(const Tensor& x) const;  // x[L,in] -> [L,out]
  const Tensor& weight() const { return weight_; }  // [in,out]
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& prefix, std::int64_t dim);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor gain_;
  Tensor bias_;
};

/// Multi-head scaled dot-product self-attention over the rows of x[L,T].
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& params, const std::string& prefix, std::int64_t dim,
                     std::int64_t heads);

  Tensor forward(const Tensor& x) const;
  std::int64_t heads() const { return heads_; }
  const Linear& query() const { return q_; }
  const Linear& key() const { return k_; }
  const Linear& value() const { return v_; }
  const Linear& output() const { return o_; }

 private:
  std::int64_t dim_ = 0;
  std::int64_t heads_ = 1;
  Linear q_, k_, v_, o_;
};

// x + MHSA(LN(x))
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParameterSet& params, const std::string& prefix, std::int64_t dim, std::int64_t heads);
  Tensor forward(const Tensor& x) const;

 private:
  LayerNorm norm_;
  MultiHeadAttention attn_;
};

// Pre-norm transformer block: y = x + MHSA(LN(x)); y + MLP(LN(y)), GELU MLP.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterSet& params, const std::string& prefix, std::int64_t dim,
                   std::int64_t heads, std::int64_t mlp_ratio);
  Tensor forward(const Tensor& x) const;
  const MultiHeadAttention& attention() const { return attn_; }

 private:
  LayerNorm norm1_;
  MultiHeadAttention attn_;
  LayerNorm norm2_;
  Linear fc1_;
  Linear fc2_;
};

class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out,
         std::int64_t kernel, std::int64_t stride, std::int64_t padding);
  Tensor forward(const Tensor& x) const;
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
  std::int64_t stride_ = 1;
  std::int64_t padding_ = 0;
};

// Kernel 2, stride 2: doubles every spatial extent.
class UpConv3d {
 public:
  UpConv3d() = default;
  UpConv3d(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

// conv 3x3x3 (same padding) -> instance norm -> leaky ReLU
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(ParameterSet& params, const std::string& prefix, std::int64_t in, std::int64_t out);
  Tensor forward(const Tensor& x) const;

 private:
  Conv3d conv_;
};

}  // namespace vivit
