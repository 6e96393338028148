#include "afen/nn/gemm.hpp"

#include <algorithm>
#include <cstring>

namespace afen::nn {

namespace {

// Register tile: kMr rows of C by one or two vector widths of columns, accumulated
// over the whole k range before a single store. A(i, p) lives at
// a[i * ais + p * aps] so the same kernel serves A and A^T.
constexpr std::size_t kMr = 4;

template <typename T>
constexpr std::size_t kLanes = 64 / sizeof(T);

template <typename T, std::size_t MR, std::size_t NV>
void tile(std::size_t k, const T* __restrict a, std::size_t ais, std::size_t aps, const T* __restrict b,
          std::size_t ldb, T* __restrict c, std::size_t ldc) {
    typedef T vec __attribute__((vector_size(64)));
    constexpr std::size_t lanes = 64 / sizeof(T);
    vec acc[MR][NV];
    for (std::size_t r = 0; r < MR; ++r)
        for (std::size_t v = 0; v < NV; ++v) std::memcpy(&acc[r][v], c + r * ldc + v * lanes, sizeof(vec));
    for (std::size_t p = 0; p < k; ++p) {
        vec bv[NV];
        for (std::size_t v = 0; v < NV; ++v) std::memcpy(&bv[v], b + p * ldb + v * lanes, sizeof(vec));
        for (std::size_t r = 0; r < MR; ++r) {
            const T av = a[r * ais + p * aps];
            for (std::size_t v = 0; v < NV; ++v) acc[r][v] += av * bv[v];
        }
    }
    for (std::size_t r = 0; r < MR; ++r)
        for (std::size_t v = 0; v < NV; ++v) std::memcpy(c + r * ldc + v * lanes, &acc[r][v], sizeof(vec));
}

template <typename T>
void edge(std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1, std::size_t k, const T* __restrict a,
          std::size_t ais, std::size_t aps, const T* __restrict b, std::size_t n, T* __restrict c) {
    for (std::size_t i = i0; i < i1; ++i) {
        T* __restrict crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * ais + p * aps];
            const T* __restrict brow = b + p * n;
            for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t ais, std::size_t aps,
              const T* b, T* c) {
    constexpr std::size_t lanes = kLanes<T>;
    const std::size_t m_full = m - m % kMr;
    const std::size_t n_pair = n - n % (2 * lanes), n_full = n - n % lanes;
    auto row_block = [&]<std::size_t MR>(std::size_t i) {
        for (std::size_t j = 0; j < n_pair; j += 2 * lanes)
            tile<T, MR, 2>(k, a + i * ais, ais, aps, b + j, n, c + i * n + j, n);
        if (n_pair < n_full) tile<T, MR, 1>(k, a + i * ais, ais, aps, b + n_pair, n, c + i * n + n_pair, n);
    };
    for (std::size_t i = 0; i < m_full; i += kMr) row_block.template operator()<kMr>(i);
    switch (m - m_full) {
        case 1: row_block.template operator()<1>(m_full); break;
        case 2: row_block.template operator()<2>(m_full); break;
        case 3: row_block.template operator()<3>(m_full); break;
        default: break;
    }
    if (n_full < n) edge(0, m, n_full, n, k, a, ais, aps, b, n, c);
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, sizeof(T) * m * n);
    gemm_acc(m, n, k, a, k, 1, b, c);
}

template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    gemm_acc(m, n, k, a, 1, m, b, c);
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_tn_acc<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_tn_acc<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void transpose<float>(std::size_t, std::size_t, const float*, float*);
template void transpose<double>(std::size_t, std::size_t, const double*, double*);

}  // namespace afen::nn
