#include "kernels.hpp"
#include "vivit/ops.hpp"

namespace vivit::ops {

using detail::check_finite;
using detail::grad_buffer;
using detail::make_result;
using detail::record_op;

Tensor matmul(const Tensor& a, const Tensor& b) {
  kernels::require_rank(a, 2, "matmul", "lhs");
  kernels::require_rank(b, 2, "matmul", "rhs");
  kernels::require_same_dtype(a, b, "matmul");
  const std::int64_t m = a.dim(0);
  const std::int64_t k = a.dim(1);
  const std::int64_t n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor out = make_result({m, n}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::gemm_nn<T>(m, n, k, a.data<T>().data(), b.data<T>().data(), out.data<T>().data(), false);
  });
  check_finite(out, "matmul");
  record_op("matmul", {a, b}, out, [a, b, out, m, n, k] {
    dispatch(a.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* g = grad_buffer<T>(out).data();
      if (a.requires_grad()) {
        // dA[M,K] = dC[M,N] * B[K,N]^T
        kernels::gemm_nt<T>(m, k, n, g, b.data<T>().data(), grad_buffer<T>(a).data(), true);
      }
      if (b.requires_grad()) {
        // dB[K,N] = A[M,K]^T * dC[M,N]
        kernels::gemm_tn<T>(k, n, m, a.data<T>().data(), g, grad_buffer<T>(b).data(), true);
      }
    });
  });
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  kernels::require_rank(a, 3, "bmm", "lhs");
  kernels::require_rank(b, 3, "bmm", "rhs");
  kernels::require_same_dtype(a, b, "bmm");
  const std::int64_t batch = a.dim(0);
  const std::int64_t m = a.dim(1);
  const std::int64_t k = a.dim(2);
  const std::int64_t n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out = make_result({batch, m, n}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* as = a.data<T>().data();
    const T* bs = b.data<T>().data();
    T* cs = out.data<T>().data();
    for (std::int64_t i = 0; i < batch; ++i) {
      kernels::gemm_nn<T>(m, n, k, as + i * m * k, bs + i * k * n, cs + i * m * n, false);
    }
  });
  check_finite(out, "bmm");
  record_op("bmm", {a, b}, out, [a, b, out, batch, m, n, k] {
    dispatch(a.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* g = grad_buffer<T>(out).data();
      const T* as = a.data<T>().data();
      const T* bs = b.data<T>().data();
      for (std::int64_t i = 0; i < batch; ++i) {
        if (a.requires_grad()) {
          kernels::gemm_nt<T>(m, k, n, g + i * m * n, bs + i * k * n,
                              grad_buffer<T>(a).data() + i * m * k, true);
        }
        if (b.requires_grad()) {
          kernels::gemm_tn<T>(k, n, m, as + i * m * k, g + i * m * n,
                              grad_buffer<T>(b).data() + i * k * n, true);
        }
      }
    });
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_bias(matmul(x, w), b);
}

}  // namespace vivit::ops
