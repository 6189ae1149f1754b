#include "vivit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "kernels.hpp"

namespace vivit::ops {

using detail::check_finite;
using detail::grad_buffer;
using detail::make_result;
using detail::record_op;
using kernels::require_rank;
using kernels::require_same_dtype;
using kernels::require_same_shape;

namespace {

template <typename Fwd, typename Deriv>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  Tensor out = make_result(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = static_cast<T>(fwd(xs[i]));
  });
  check_finite(out, name);
  record_op(name, {x}, out, [x, out, deriv] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gy = grad_buffer<T>(out);
      auto gx = grad_buffer<T>(x);
      auto xs = x.data<T>();
      auto ys = out.data<T>();
      for (std::size_t i = 0; i < xs.size(); ++i) gx[i] += gy[i] * static_cast<T>(deriv(xs[i], ys[i]));
    });
  });
  return out;
}

// Splits a shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t extent = 1;
  std::int64_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, std::string_view op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

std::int64_t row_size(const Tensor& x, std::string_view op) {
  if (x.rank() < 1) throw ShapeError(std::string(op) + ": row ops need rank >= 1");
  return x.dim(0) == 0 ? 0 : x.numel() / x.dim(0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise binary

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = make_result(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
  });
  check_finite(out, "add");
  record_op("add", {a, b}, out, [a, b, out] {
    dispatch(a.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      for (const Tensor* in : {&a, &b}) {
        if (!in->requires_grad()) continue;
        auto gi = grad_buffer<T>(*in);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    });
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = make_result(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] - y[i];
  });
  check_finite(out, "sub");
  record_op("sub", {a, b}, out, [a, b, out] {
    dispatch(a.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      if (a.requires_grad()) {
        auto ga = grad_buffer<T>(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = grad_buffer<T>(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make_result(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
  });
  check_finite(out, "mul");
  record_op("mul", {a, b}, out, [a, b, out] {
    dispatch(a.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto x = a.data<T>();
      auto y = b.data<T>();
      if (a.requires_grad()) {
        auto ga = grad_buffer<T>(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = grad_buffer<T>(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  });
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Tensor out = make_result(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] / y[i];
  });
  check_finite(out, "div");
  record_op("div", {a, b}, out, [a, b, out] {
    dispatch(a.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto y = b.data<T>();
      auto z = out.data<T>();
      if (a.requires_grad()) {
        auto ga = grad_buffer<T>(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / y[i];
      }
      if (b.requires_grad()) {
        auto gb = grad_buffer<T>(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * z[i] / y[i];
      }
    });
  });
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      "scale", a, [factor](auto v) { return v * factor; },
      [factor](auto, auto) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      "add_scalar", a, [value](auto v) { return v + value; }, [](auto, auto) { return 1.0; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_same_dtype(x, bias, "add_bias");
  require_rank(bias, 1, "add_bias", "bias");
  if (x.rank() < 1 || x.shape().back() != bias.dim(0)) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                     shape_str(x.shape()));
  }
  const std::int64_t n = bias.dim(0);
  const std::int64_t rows = n == 0 ? 0 : x.numel() / n;
  Tensor out = make_result(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    auto bs = bias.data<T>();
    auto ys = out.data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t j = 0; j < n; ++j) ys[r * n + j] = xs[r * n + j] + bs[j];
    }
  });
  check_finite(out, "add_bias");
  record_op("add_bias", {x, bias}, out, [x, bias, out, rows, n] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      if (x.requires_grad()) {
        auto gx = grad_buffer<T>(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = grad_buffer<T>(bias);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
        }
      }
    });
  });
  return out;
}

Tensor scale_leading(const Tensor& x, const Tensor& s) {
  require_same_dtype(x, s, "scale_leading");
  require_rank(s, 1, "scale_leading", "scale");
  if (x.rank() < 1 || x.dim(0) != s.dim(0)) {
    throw ShapeError("scale_leading: scale " + shape_str(s.shape()) +
                     " does not match leading axis of " + shape_str(x.shape()));
  }
  const std::int64_t c = s.dim(0);
  const std::int64_t inner = c == 0 ? 0 : x.numel() / c;
  Tensor out = make_result(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    auto ss = s.data<T>();
    auto ys = out.data<T>();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t j = 0; j < inner; ++j) ys[ch * inner + j] = xs[ch * inner + j] * ss[ch];
    }
  });
  check_finite(out, "scale_leading");
  record_op("scale_leading", {x, s}, out, [x, s, out, c, inner] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto xs = x.data<T>();
      auto ss = s.data<T>();
      if (x.requires_grad()) {
        auto gx = grad_buffer<T>(x);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          for (std::int64_t j = 0; j < inner; ++j) gx[ch * inner + j] += g[ch * inner + j] * ss[ch];
        }
      }
      if (s.requires_grad()) {
        auto gs = grad_buffer<T>(s);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          T acc = 0;
          for (std::int64_t j = 0; j < inner; ++j) acc += g[ch * inner + j] * xs[ch * inner + j];
          gs[ch] += acc;
        }
      }
    });
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = make_result(std::move(shape), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::ranges::copy(x.data<T>(), out.data<T>().begin());
  });
  record_op("reshape", {x}, out, [x, out] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto gx = grad_buffer<T>(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
  return out;
}

namespace {

// out[idx_out] = x[idx_in] where idx_out enumerates the permuted shape.
// Returns, for each output flat index, the source flat index.
std::vector<std::int64_t> permutation_map(const Shape& in_shape, const std::vector<std::size_t>& perm) {
  const std::size_t r = in_shape.size();
  std::vector<std::int64_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::int64_t> step(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[perm[i]];
    step[i] = in_strides[perm[i]];
  }
  const std::int64_t n = shape_numel(in_shape);
  std::vector<std::int64_t> map(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t src = 0;
  for (std::int64_t o = 0; o < n; ++o) {
    map[static_cast<std::size_t>(o)] = src;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      src += step[d];
      if (idx[d] < out_shape[d]) break;
      src -= step[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) {
    throw ShapeError("permute: permutation of length " + std::to_string(perm.size()) +
                     " for shape " + shape_str(x.shape()));
  }
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p >= r || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(perm[i]);
  auto map = std::make_shared<std::vector<std::int64_t>>(permutation_map(x.shape(), perm));
  Tensor out = make_result(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t o = 0; o < ys.size(); ++o) ys[o] = xs[(*map)[o]];
  });
  record_op("permute", {x}, out, [x, out, map] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto gx = grad_buffer<T>(x);
      for (std::size_t o = 0; o < g.size(); ++o) gx[(*map)[o]] += g[o];
    });
  });
  return out;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose", "input");
  return permute(x, {1, 0});
}

// ---------------------------------------------------------------------------
// Normalization and activations

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis, "softmax");
  Tensor out = make_result(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t in = 0; in < s.inner; ++in) {
        const std::int64_t base = o * s.extent * s.inner + in;
        T mx = xs[base];
        for (std::int64_t a = 1; a < s.extent; ++a) mx = std::max(mx, xs[base + a * s.inner]);
        T total = 0;
        for (std::int64_t a = 0; a < s.extent; ++a) {
          const T e = std::exp(xs[base + a * s.inner] - mx);
          ys[base + a * s.inner] = e;
          total += e;
        }
        for (std::int64_t a = 0; a < s.extent; ++a) ys[base + a * s.inner] /= total;
      }
    }
  });
  check_finite(out, "softmax");
  record_op("softmax", {x}, out, [x, out, s] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto gx = grad_buffer<T>(x);
      auto ys = out.data<T>();
      for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
          const std::int64_t base = o * s.extent * s.inner + in;
          T dot = 0;
          for (std::int64_t a = 0; a < s.extent; ++a) {
            const auto i = base + a * s.inner;
            dot += g[i] * ys[i];
          }
          for (std::int64_t a = 0; a < s.extent; ++a) {
            const auto i = base + a * s.inner;
            gx[i] += ys[i] * (g[i] - dot);
          }
        }
      }
    });
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_same_dtype(x, gain, "layer_norm");
  require_same_dtype(x, bias, "layer_norm");
  require_rank(gain, 1, "layer_norm", "gain");
  require_rank(bias, 1, "layer_norm", "bias");
  if (x.rank() < 1 || x.shape().back() != gain.dim(0) || gain.dim(0) != bias.dim(0)) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + " vs input " +
                     shape_str(x.shape()));
  }
  const std::int64_t n = gain.dim(0);
  const std::int64_t rows = n == 0 ? 0 : x.numel() / n;
  Tensor out = make_result(x.shape(), x.dtype());
  // Saved normalized values and inverse std per row.
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    auto gs = gain.data<T>();
    auto bs = bias.data<T>();
    auto ys = out.data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* row = xs.data() + r * n;
      double mu = 0;
      for (std::int64_t j = 0; j < n; ++j) mu += row[j];
      mu /= static_cast<double>(n);
      double var = 0;
      for (std::int64_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= static_cast<double>(n);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(r)] = is;
      for (std::int64_t j = 0; j < n; ++j) {
        const double h = (row[j] - mu) * is;
        (*xhat)[static_cast<std::size_t>(r * n + j)] = h;
        ys[r * n + j] = static_cast<T>(h * gs[j] + bs[j]);
      }
    }
  });
  check_finite(out, "layer_norm");
  record_op("layer_norm", {x, gain, bias}, out, [x, gain, bias, out, xhat, inv_std, rows, n] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto gs = gain.data<T>();
      if (gain.requires_grad()) {
        auto gg = grad_buffer<T>(gain);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t j = 0; j < n; ++j) {
            gg[j] += static_cast<T>(g[r * n + j] * (*xhat)[static_cast<std::size_t>(r * n + j)]);
          }
        }
      }
      if (bias.requires_grad()) {
        auto gb = grad_buffer<T>(bias);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
        }
      }
      if (x.requires_grad()) {
        auto gx = grad_buffer<T>(x);
        for (std::int64_t r = 0; r < rows; ++r) {
          double mean_d = 0;
          double mean_dh = 0;
          for (std::int64_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(g[r * n + j]) * gs[j];
            mean_d += d;
            mean_dh += d * (*xhat)[static_cast<std::size_t>(r * n + j)];
          }
          mean_d /= static_cast<double>(n);
          mean_dh /= static_cast<double>(n);
          const double is = (*inv_std)[static_cast<std::size_t>(r)];
          for (std::int64_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(g[r * n + j]) * gs[j];
            const double h = (*xhat)[static_cast<std::size_t>(r * n + j)];
            gx[r * n + j] += static_cast<T>(is * (d - mean_d - h * mean_dh));
          }
        }
      }
    });
  });
  return out;
}

Tensor instance_norm(const Tensor& x, double eps) {
  if (x.rank() < 2) throw ShapeError("instance_norm: expected [C, ...], got " + shape_str(x.shape()));
  const std::int64_t c = x.dim(0);
  const std::int64_t n = c == 0 ? 0 : x.numel() / c;
  Tensor out = make_result(x.shape(), x.dtype());
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* row = xs.data() + ch * n;
      double mu = 0;
      for (std::int64_t j = 0; j < n; ++j) mu += row[j];
      mu /= static_cast<double>(n);
      double var = 0;
      for (std::int64_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= static_cast<double>(n);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(ch)] = is;
      for (std::int64_t j = 0; j < n; ++j) {
        const double h = (row[j] - mu) * is;
        (*xhat)[static_cast<std::size_t>(ch * n + j)] = h;
        ys[ch * n + j] = static_cast<T>(h);
      }
    }
  });
  check_finite(out, "instance_norm");
  record_op("instance_norm", {x}, out, [x, out, xhat, inv_std, c, n] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto gx = grad_buffer<T>(x);
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double mean_d = 0;
        double mean_dh = 0;
        for (std::int64_t j = 0; j < n; ++j) {
          const double d = g[ch * n + j];
          mean_d += d;
          mean_dh += d * (*xhat)[static_cast<std::size_t>(ch * n + j)];
        }
        mean_d /= static_cast<double>(n);
        mean_dh /= static_cast<double>(n);
        const double is = (*inv_std)[static_cast<std::size_t>(ch)];
        for (std::int64_t j = 0; j < n; ++j) {
          const double h = (*xhat)[static_cast<std::size_t>(ch * n + j)];
          gx[ch * n + j] += static_cast<T>(is * (g[ch * n + j] - mean_d - h * mean_dh));
        }
      }
    });
  });
  return out;
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_op(
      "gelu", x,
      [](auto v) {
        const double d = v;
        return 0.5 * d * (1.0 + std::erf(d * kInvSqrt2));
      },
      [](auto v, auto) {
        const double d = v;
        return 0.5 * (1.0 + std::erf(d * kInvSqrt2)) + d * kInvSqrt2Pi * std::exp(-0.5 * d * d);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](auto v) {
        const double d = v;
        if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
        const double e = std::exp(d);
        return e / (1.0 + e);
      },
      [](auto, auto y) {
        const double s = y;
        return s * (1.0 - s);
      });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary_op(
      "leaky_relu", x, [slope](auto v) { return v > 0 ? static_cast<double>(v) : slope * v; },
      [slope](auto v, auto) { return v > 0 ? 1.0 : slope; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  Tensor out = make_result({}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double acc = 0;
    for (T v : x.data<T>()) acc += v;
    out.data<T>()[0] = static_cast<T>(acc);
  });
  check_finite(out, "sum");
  record_op("sum", {x}, out, [x, out] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T g = grad_buffer<T>(out)[0];
      for (auto& v : grad_buffer<T>(x)) v += g;
    });
  });
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_over_axis(const Tensor& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis, "sum_over_axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out = make_result(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t in = 0; in < s.inner; ++in) {
        double acc = 0;
        for (std::int64_t a = 0; a < s.extent; ++a) acc += xs[(o * s.extent + a) * s.inner + in];
        ys[o * s.inner + in] = static_cast<T>(acc);
      }
    }
  });
  check_finite(out, "sum_over_axis");
  record_op("sum_over_axis", {x}, out, [x, out, s] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto gx = grad_buffer<T>(x);
      for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t a = 0; a < s.extent; ++a) {
          for (std::int64_t in = 0; in < s.inner; ++in) {
            gx[(o * s.extent + a) * s.inner + in] += g[o * s.inner + in];
          }
        }
      }
    });
  });
  return out;
}

Tensor mean_over_axis(const Tensor& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis, "mean_over_axis");
  if (s.extent == 0) throw ShapeError("mean_over_axis: empty axis");
  return scale(sum_over_axis(x, axis), 1.0 / static_cast<double>(s.extent));
}

// ---------------------------------------------------------------------------
// Row ops

Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> rows) {
  const std::int64_t width = row_size(x, "gather_rows");
  const std::int64_t n_rows = x.dim(0);
  for (auto r : rows) {
    if (r < 0 || r >= n_rows) {
      throw ShapeError("gather_rows: index " + std::to_string(r) + " out of bounds for " +
                       std::to_string(n_rows) + " rows");
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<std::int64_t>(rows.size());
  auto idx = std::make_shared<std::vector<std::int64_t>>(rows.begin(), rows.end());
  Tensor out = make_result(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      std::copy_n(xs.data() + (*idx)[i] * width, width, ys.data() + static_cast<std::int64_t>(i) * width);
    }
  });
  record_op("gather_rows", {x}, out, [x, out, idx, width] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto gx = grad_buffer<T>(x);
      for (std::size_t i = 0; i < idx->size(); ++i) {
        for (std::int64_t j = 0; j < width; ++j) {
          gx[(*idx)[i] * width + j] += g[static_cast<std::int64_t>(i) * width + j];
        }
      }
    });
  });
  return out;
}

Tensor replace_rows(const Tensor& base, std::span<const std::int64_t> rows, const Tensor& replacement) {
  require_same_dtype(base, replacement, "replace_rows");
  const std::int64_t width = row_size(base, "replace_rows");
  if (replacement.rank() != base.rank() || replacement.dim(0) != static_cast<std::int64_t>(rows.size()) ||
      row_size(replacement, "replace_rows") != width) {
    throw ShapeError("replace_rows: replacement " + shape_str(replacement.shape()) + " for " +
                     std::to_string(rows.size()) + " rows of " + shape_str(base.shape()));
  }
  std::vector<bool> hit(static_cast<std::size_t>(base.dim(0)), false);
  for (auto r : rows) {
    if (r < 0 || r >= base.dim(0)) {
      throw ShapeError("replace_rows: index " + std::to_string(r) + " out of bounds");
    }
    if (hit[static_cast<std::size_t>(r)]) throw ShapeError("replace_rows: duplicate index");
    hit[static_cast<std::size_t>(r)] = true;
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(rows.begin(), rows.end());
  auto replaced = std::make_shared<std::vector<bool>>(std::move(hit));
  Tensor out = make_result(base.shape(), base.dtype());
  dispatch(base.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::ranges::copy(base.data<T>(), out.data<T>().begin());
    auto rs = replacement.data<T>();
    auto ys = out.data<T>();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      std::copy_n(rs.data() + static_cast<std::int64_t>(i) * width, width, ys.data() + (*idx)[i] * width);
    }
  });
  record_op("replace_rows", {base, replacement}, out, [base, replacement, out, idx, replaced, width] {
    dispatch(base.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      if (base.requires_grad()) {
        auto gb = grad_buffer<T>(base);
        for (std::int64_t r = 0; r < base.dim(0); ++r) {
          if ((*replaced)[static_cast<std::size_t>(r)]) continue;
          for (std::int64_t j = 0; j < width; ++j) gb[r * width + j] += g[r * width + j];
        }
      }
      if (replacement.requires_grad()) {
        auto gr = grad_buffer<T>(replacement);
        for (std::size_t i = 0; i < idx->size(); ++i) {
          for (std::int64_t j = 0; j < width; ++j) {
            gr[static_cast<std::int64_t>(i) * width + j] += g[(*idx)[i] * width + j];
          }
        }
      }
    });
  });
  return out;
}

Tensor repeat_rows(const Tensor& v, std::int64_t count) {
  require_rank(v, 1, "repeat_rows", "input");
  if (count < 0) throw ShapeError("repeat_rows: negative count");
  const std::int64_t n = v.dim(0);
  Tensor out = make_result({count, n}, v.dtype());
  dispatch(v.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto vs = v.data<T>();
    auto ys = out.data<T>();
    for (std::int64_t r = 0; r < count; ++r) std::ranges::copy(vs, ys.begin() + r * n);
  });
  record_op("repeat_rows", {v}, out, [v, out, count, n] {
    dispatch(v.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto gv = grad_buffer<T>(v);
      for (std::int64_t r = 0; r < count; ++r) {
        for (std::int64_t j = 0; j < n; ++j) gv[j] += g[r * n + j];
      }
    });
  });
  return out;
}

Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t length) {
  const std::int64_t width = row_size(x, "slice_rows");
  if (start < 0 || length < 0 || start + length > x.dim(0)) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(length) +
                     ") out of bounds for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[0] = length;
  Tensor out = make_result(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::copy_n(x.data<T>().data() + start * width, length * width, out.data<T>().data());
  });
  record_op("slice_rows", {x}, out, [x, out, start, width] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      auto gx = grad_buffer<T>(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[start * width + static_cast<std::int64_t>(i)] += g[i];
    });
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Tensor& first = parts.front();
  Shape out_shape = first.shape();
  if (out_shape.empty()) throw ShapeError("concat_rows: scalar inputs");
  out_shape[0] = 0;
  for (const auto& p : parts) {
    require_same_dtype(first, p, "concat_rows");
    if (p.rank() != first.rank() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), first.shape().begin() + 1)) {
      throw ShapeError("concat_rows: trailing shape mismatch " + shape_str(p.shape()) + " vs " +
                       shape_str(first.shape()));
    }
    out_shape[0] += p.dim(0);
  }
  Tensor out = make_result(out_shape, first.dtype());
  dispatch(first.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto ys = out.data<T>();
    std::size_t offset = 0;
    for (const auto& p : parts) {
      auto ps = p.data<T>();
      std::ranges::copy(ps, ys.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += ps.size();
    }
  });
  record_op("concat_rows", parts, out, [parts, out] {
    dispatch(out.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = grad_buffer<T>(out);
      std::size_t offset = 0;
      for (const auto& p : parts) {
        const auto n = static_cast<std::size_t>(p.numel());
        if (p.requires_grad()) {
          auto gp = grad_buffer<T>(p);
          for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
        }
        offset += n;
      }
    });
  });
  return out;
}

}  // namespace vivit::ops
