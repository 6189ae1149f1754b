#pragma once

// Internal helpers shared by the op implementations.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vivit/errors.hpp"
#include "vivit/parallel.hpp"
#include "vivit/tensor.hpp"

namespace vivit::kernels {

inline void require_same_dtype(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.dtype() != b.dtype()) {
    throw ShapeError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  require_same_dtype(a, b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

inline void require_rank(const Tensor& a, std::size_t rank, std::string_view op,
                         std::string_view what) {
  if (!a.defined()) throw ShapeError(std::string(op) + ": " + std::string(what) + " is undefined");
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + std::string(what) + " must be rank " +
                     std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

// C[M,N] (+)= A[M,K] * B[K,N]; all row-major and contiguous.
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  parallel_for(m, 8, [&](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      if (!accumulate) {
        for (std::int64_t j = 0; j < n; ++j) crow[j] = T(0);
      }
      const T* arow = a + i * k;
      for (std::int64_t p = 0; p < k; ++p) {
        const T av = arow[p];
        if (av == T(0)) continue;
        const T* brow = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  parallel_for(m, 8, [&](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      if (!accumulate) {
        for (std::int64_t j = 0; j < n; ++j) crow[j] = T(0);
      }
      for (std::int64_t p = 0; p < k; ++p) {
        const T av = a[p * m + i];
        if (av == T(0)) continue;
        const T* brow = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  std::vector<T> bt(static_cast<std::size_t>(n * k));
  for (std::int64_t j = 0; j < n; ++j) {
    for (std::int64_t p = 0; p < k; ++p) bt[static_cast<std::size_t>(p * n + j)] = b[j * k + p];
  }
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

}  // namespace vivit::kernels
