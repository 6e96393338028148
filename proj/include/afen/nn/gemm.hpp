#pragma once

#include <cstddef>

namespace afen::nn {

// Row-major single-threaded GEMM kernels. Summation order is fixed, so
// results are bitwise reproducible for a given build.

/// C[M x N] (+)= A[M x K] * B[K x N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

/// C[M x N] += A^T * B, with A stored K x M and B stored K x N.
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

/// Out[cols x rows] = In[rows x cols]^T
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out);

}  // namespace afen::nn
