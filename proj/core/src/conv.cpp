#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "vivit/ops.hpp"

namespace vivit::ops {

using detail::check_finite;
using detail::grad_buffer;
using detail::make_result;
using detail::record_op;

namespace {

struct ConvGeometry {
  std::int64_t channels = 0;   // channels of the "image" side
  Extent3 in{};                // image extent
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  Extent3 out{};               // column (sliding-window) extent

  std::int64_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::int64_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::int64_t col_rows() const { return channels * kernel * kernel * kernel; }
};

// cols[(c,kx,ky,kz), (ox,oy,oz)] = image[c, ox*s-p+kx, oy*s-p+ky, oz*s-p+kz] (0 outside).
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* cols) {
  const std::int64_t k = g.kernel;
  const std::int64_t vo = g.out_volume();
  parallel_for(g.channels, 1, [&](std::int64_t c0, std::int64_t c1) {
    for (std::int64_t c = c0; c < c1; ++c) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        for (std::int64_t ky = 0; ky < k; ++ky) {
          for (std::int64_t kz = 0; kz < k; ++kz) {
            T* dst = cols + (((c * k + kx) * k + ky) * k + kz) * vo;
            for (std::int64_t ox = 0; ox < g.out[0]; ++ox) {
              const std::int64_t ix = ox * g.stride - g.padding + kx;
              for (std::int64_t oy = 0; oy < g.out[1]; ++oy) {
                const std::int64_t iy = oy * g.stride - g.padding + ky;
                T* row = dst + (ox * g.out[1] + oy) * g.out[2];
                if (ix < 0 || ix >= g.in[0] || iy < 0 || iy >= g.in[1]) {
                  std::fill_n(row, g.out[2], T(0));
                  continue;
                }
                const T* src = image + ((c * g.in[0] + ix) * g.in[1] + iy) * g.in[2];
                for (std::int64_t oz = 0; oz < g.out[2]; ++oz) {
                  const std::int64_t iz = oz * g.stride - g.padding + kz;
                  row[oz] = (iz >= 0 && iz < g.in[2]) ? src[iz] : T(0);
                }
              }
            }
          }
        }
      }
    }
  });
}

// Adjoint of im2col: image[...] += cols[...].
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* image) {
  const std::int64_t k = g.kernel;
  const std::int64_t vo = g.out_volume();
  parallel_for(g.channels, 1, [&](std::int64_t c0, std::int64_t c1) {
    for (std::int64_t c = c0; c < c1; ++c) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        for (std::int64_t ky = 0; ky < k; ++ky) {
          for (std::int64_t kz = 0; kz < k; ++kz) {
            const T* src_rows = cols + (((c * k + kx) * k + ky) * k + kz) * vo;
            for (std::int64_t ox = 0; ox < g.out[0]; ++ox) {
              const std::int64_t ix = ox * g.stride - g.padding + kx;
              if (ix < 0 || ix >= g.in[0]) continue;
              for (std::int64_t oy = 0; oy < g.out[1]; ++oy) {
                const std::int64_t iy = oy * g.stride - g.padding + ky;
                if (iy < 0 || iy >= g.in[1]) continue;
                const T* row = src_rows + (ox * g.out[1] + oy) * g.out[2];
                T* dst = image + ((c * g.in[0] + ix) * g.in[1] + iy) * g.in[2];
                for (std::int64_t oz = 0; oz < g.out[2]; ++oz) {
                  const std::int64_t iz = oz * g.stride - g.padding + kz;
                  if (iz >= 0 && iz < g.in[2]) dst[iz] += row[oz];
                }
              }
            }
          }
        }
      }
    }
  });
}

std::int64_t cubic_kernel(const Tensor& w, std::string_view op) {
  if (w.dim(2) != w.dim(3) || w.dim(2) != w.dim(4)) {
    throw ShapeError(std::string(op) + ": kernel must be cubic, got " + shape_str(w.shape()));
  }
  if (w.dim(2) < 1) throw ShapeError(std::string(op) + ": empty kernel");
  return w.dim(2);
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride,
              std::int64_t padding) {
  kernels::require_rank(x, 4, "conv3d", "input");
  kernels::require_rank(w, 5, "conv3d", "weight");
  kernels::require_rank(b, 1, "conv3d", "bias");
  kernels::require_same_dtype(x, w, "conv3d");
  kernels::require_same_dtype(x, b, "conv3d");
  const std::int64_t k = cubic_kernel(w, "conv3d");
  const std::int64_t c_in = x.dim(0);
  const std::int64_t c_out = w.dim(0);
  if (w.dim(1) != c_in) {
    throw ShapeError("conv3d: weight expects " + std::to_string(w.dim(1)) + " input channels, input " +
                     shape_str(x.shape()) + " has " + std::to_string(c_in));
  }
  if (b.dim(0) != c_out) {
    throw ShapeError("conv3d: bias " + shape_str(b.shape()) + " for " + std::to_string(c_out) +
                     " output channels");
  }
  if (stride < 1) throw ShapeError("conv3d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv3d: padding must be >= 0");
  ConvGeometry g;
  g.channels = c_in;
  g.kernel = k;
  g.stride = stride;
  g.padding = padding;
  for (std::size_t a = 0; a < 3; ++a) {
    g.in[a] = x.dim(a + 1);
    const std::int64_t span = g.in[a] + 2 * padding - k;
    if (span < 0) {
      throw ShapeError("conv3d: kernel " + std::to_string(k) + " larger than padded input " +
                       shape_str(x.shape()) + " (padding " + std::to_string(padding) + ")");
    }
    g.out[a] = span / stride + 1;
    if (g.in[a] == 0) throw ShapeError("conv3d: zero-size input " + shape_str(x.shape()));
  }
  const std::int64_t vo = g.out_volume();
  const std::int64_t kc = g.col_rows();
  Tensor out = make_result({c_out, g.out[0], g.out[1], g.out[2]}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> cols(static_cast<std::size_t>(kc * vo));
    im2col<T>(g, x.data<T>().data(), cols.data());
    T* ys = out.data<T>().data();
    auto bs = b.data<T>();
    for (std::int64_t co = 0; co < c_out; ++co) std::fill_n(ys + co * vo, vo, bs[co]);
    kernels::gemm_nn<T>(c_out, vo, kc, w.data<T>().data(), cols.data(), ys, true);
  });
  check_finite(out, "conv3d");
  record_op("conv3d", {x, w, b}, out, [x, w, b, out, g, c_out, vo, kc] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* gy = grad_buffer<T>(out).data();
      if (b.requires_grad()) {
        auto gb = grad_buffer<T>(b);
        for (std::int64_t co = 0; co < c_out; ++co) {
          T acc = 0;
          for (std::int64_t v = 0; v < vo; ++v) acc += gy[co * vo + v];
          gb[co] += acc;
        }
      }
      if (w.requires_grad()) {
        std::vector<T> cols(static_cast<std::size_t>(kc * vo));
        im2col<T>(g, x.data<T>().data(), cols.data());
        kernels::gemm_nt<T>(c_out, kc, vo, gy, cols.data(), grad_buffer<T>(w).data(), true);
      }
      if (x.requires_grad()) {
        std::vector<T> dcols(static_cast<std::size_t>(kc * vo));
        kernels::gemm_tn<T>(kc, vo, c_out, w.data<T>().data(), gy, dcols.data(), false);
        col2im<T>(g, dcols.data(), grad_buffer<T>(x).data());
      }
    });
  });
  return out;
}

Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride) {
  kernels::require_rank(x, 4, "conv_transpose3d", "input");
  kernels::require_rank(w, 5, "conv_transpose3d", "weight");
  kernels::require_rank(b, 1, "conv_transpose3d", "bias");
  kernels::require_same_dtype(x, w, "conv_transpose3d");
  kernels::require_same_dtype(x, b, "conv_transpose3d");
  const std::int64_t k = cubic_kernel(w, "conv_transpose3d");
  const std::int64_t c_in = x.dim(0);
  const std::int64_t c_out = w.dim(1);
  if (w.dim(0) != c_in) {
    throw ShapeError("conv_transpose3d: weight " + shape_str(w.shape()) + " vs input " +
                     shape_str(x.shape()));
  }
  if (b.dim(0) != c_out) throw ShapeError("conv_transpose3d: bias size mismatch");
  if (stride < 1) throw ShapeError("conv_transpose3d: stride must be >= 1");
  // The transposed conv is the adjoint of a conv whose input is our output.
  ConvGeometry g;
  g.channels = c_out;
  g.kernel = k;
  g.stride = stride;
  g.padding = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    g.out[a] = x.dim(a + 1);
    if (g.out[a] == 0) throw ShapeError("conv_transpose3d: zero-size input");
    g.in[a] = (g.out[a] - 1) * stride + k;
  }
  const std::int64_t vi = g.out_volume();
  const std::int64_t vo = g.in_volume();
  const std::int64_t kc = g.col_rows();
  Tensor out = make_result({c_out, g.in[0], g.in[1], g.in[2]}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> cols(static_cast<std::size_t>(kc * vi));
    kernels::gemm_tn<T>(kc, vi, c_in, w.data<T>().data(), x.data<T>().data(), cols.data(), false);
    T* ys = out.data<T>().data();
    auto bs = b.data<T>();
    for (std::int64_t co = 0; co < c_out; ++co) std::fill_n(ys + co * vo, vo, bs[co]);
    col2im<T>(g, cols.data(), ys);
  });
  check_finite(out, "conv_transpose3d");
  record_op("conv_transpose3d", {x, w, b}, out, [x, w, b, out, g, c_in, c_out, vi, vo, kc] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* gy = grad_buffer<T>(out).data();
      if (b.requires_grad()) {
        auto gb = grad_buffer<T>(b);
        for (std::int64_t co = 0; co < c_out; ++co) {
          T acc = 0;
          for (std::int64_t v = 0; v < vo; ++v) acc += gy[co * vo + v];
          gb[co] += acc;
        }
      }
      if (!x.requires_grad() && !w.requires_grad()) return;
      std::vector<T> dcols(static_cast<std::size_t>(kc * vi));
      im2col<T>(g, gy, dcols.data());
      if (x.requires_grad()) {
        kernels::gemm_nn<T>(c_in, vi, kc, w.data<T>().data(), dcols.data(), grad_buffer<T>(x).data(), true);
      }
      if (w.requires_grad()) {
        kernels::gemm_nt<T>(c_in, kc, vi, x.data<T>().data(), dcols.data(), grad_buffer<T>(w).data(), true);
      }
    });
  });
  return out;
}

namespace {

struct Lerp {
  std::int64_t i0 = 0;
  std::int64_t i1 = 0;
  double w0 = 1.0;
  double w1 = 0.0;
};

std::vector<Lerp> axis_lerp(std::int64_t in, std::int64_t out) {
  std::vector<Lerp> table(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    Lerp& l = table[static_cast<std::size_t>(d)];
    l.i0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(src)), in - 1);
    l.i1 = std::min<std::int64_t>(l.i0 + 1, in - 1);
    l.w1 = src - static_cast<double>(l.i0);
    l.w0 = 1.0 - l.w1;
  }
  return table;
}

}  // namespace

Tensor trilinear_resize(const Tensor& x, const Extent3& target) {
  kernels::require_rank(x, 4, "trilinear_resize", "input");
  for (std::size_t a = 0; a < 3; ++a) {
    if (target[a] < 1) throw ShapeError("trilinear_resize: zero target extent");
    if (x.dim(a + 1) < 1) throw ShapeError("trilinear_resize: zero input extent");
  }
  const std::int64_t c = x.dim(0);
  const Extent3 in{x.dim(1), x.dim(2), x.dim(3)};
  auto lx = std::make_shared<std::vector<Lerp>>(axis_lerp(in[0], target[0]));
  auto ly = std::make_shared<std::vector<Lerp>>(axis_lerp(in[1], target[1]));
  auto lz = std::make_shared<std::vector<Lerp>>(axis_lerp(in[2], target[2]));
  Tensor out = make_result({c, target[0], target[1], target[2]}, x.dtype());

  // Visits every (output index, input index, weight) triple.
  auto visit = [c, in, target, lx, ly, lz](auto&& fn) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t ox = 0; ox < target[0]; ++ox) {
        const Lerp& ax = (*lx)[static_cast<std::size_t>(ox)];
        for (std::int64_t oy = 0; oy < target[1]; ++oy) {
          const Lerp& ay = (*ly)[static_cast<std::size_t>(oy)];
          for (std::int64_t oz = 0; oz < target[2]; ++oz) {
            const Lerp& az = (*lz)[static_cast<std::size_t>(oz)];
            const std::int64_t o = ((ch * target[0] + ox) * target[1] + oy) * target[2] + oz;
            const std::int64_t xi[2] = {ax.i0, ax.i1};
            const std::int64_t yi[2] = {ay.i0, ay.i1};
            const std::int64_t zi[2] = {az.i0, az.i1};
            const double xw[2] = {ax.w0, ax.w1};
            const double yw[2] = {ay.w0, ay.w1};
            const double zw[2] = {az.w0, az.w1};
            for (int a = 0; a < 2; ++a) {
              for (int bb = 0; bb < 2; ++bb) {
                for (int cc = 0; cc < 2; ++cc) {
                  const double wgt = xw[a] * yw[bb] * zw[cc];
                  if (wgt == 0.0) continue;
                  const std::int64_t i = ((ch * in[0] + xi[a]) * in[1] + yi[bb]) * in[2] + zi[cc];
                  fn(o, i, wgt);
                }
              }
            }
          }
        }
      }
    }
  };

  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xs = x.data<T>();
    std::vector<double> acc(static_cast<std::size_t>(out.numel()), 0.0);
    visit([&](std::int64_t o, std::int64_t i, double wgt) {
      acc[static_cast<std::size_t>(o)] += wgt * static_cast<double>(xs[i]);
    });
    auto ys = out.data<T>();
    for (std::size_t o = 0; o < acc.size(); ++o) ys[o] = static_cast<T>(acc[o]);
  });
  check_finite(out, "trilinear_resize");
  record_op("trilinear_resize", {x}, out, [x, out, visit] {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gy = grad_buffer<T>(out);
      auto gx = grad_buffer<T>(x);
      visit([&](std::int64_t o, std::int64_t i, double wgt) {
        gx[i] += static_cast<T>(wgt * static_cast<double>(gy[o]));
      });
    });
  });
  return out;
}

}  // namespace vivit::ops
