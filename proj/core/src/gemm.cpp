// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

namespace msgen::gemm {
namespace {

constexpr std::size_t kPanel = 16;

// Every output element is one fused multiply-add chain over p = 0..k-1
// starting from +0, so a row's result does not depend on the other rows
// computed alongside it or on the SIMD width.
#if defined(__AVX512F__)
constexpr std::size_t kRows = 8;

template <std::size_t R>
inline void micro_kernel(std::size_t k, const double* a, std::size_t rs, std::size_t cs, const double* panel,
                         double (&out)[kRows][kPanel]) {
  __m512d acc[R][2];
  for (std::size_t r = 0; r < R; ++r) acc[r][0] = acc[r][1] = _mm512_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m512d b0 = _mm512_loadu_pd(panel + p * kPanel);
    const __m512d b1 = _mm512_loadu_pd(panel + p * kPanel + 8);
    for (std::size_t r = 0; r < R; ++r) {
      const __m512d av = _mm512_set1_pd(a[r * rs + p * cs]);
      acc[r][0] = _mm512_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    _mm512_storeu_pd(out[r], acc[r][0]);
    _mm512_storeu_pd(out[r] + 8, acc[r][1]);
  }
}
#elif defined(__AVX2__) && defined(__FMA__)
constexpr std::size_t kRows = 3;

template <std::size_t R>
inline void micro_kernel(std::size_t k, const double* a, std::size_t rs, std::size_t cs, const double* panel,
                         double (&out)[kRows][kPanel]) {
  __m256d acc[R][4];
  for (std::size_t r = 0; r < R; ++r)
    for (auto& v : acc[r]) v = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const double* b = panel + p * kPanel;
    const __m256d b0 = _mm256_loadu_pd(b), b1 = _mm256_loadu_pd(b + 4);
    const __m256d b2 = _mm256_loadu_pd(b + 8), b3 = _mm256_loadu_pd(b + 12);
    for (std::size_t r = 0; r < R; ++r) {
      const __m256d av = _mm256_set1_pd(a[r * rs + p * cs]);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
      acc[r][2] = _mm256_fmadd_pd(av, b2, acc[r][2]);
      acc[r][3] = _mm256_fmadd_pd(av, b3, acc[r][3]);
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < 4; ++v) _mm256_storeu_pd(out[r] + 4 * v, acc[r][v]);
}
#else
constexpr std::size_t kRows = 4;

template <std::size_t R>
inline void micro_kernel(std::size_t k, const double* a, std::size_t rs, std::size_t cs, const double* panel,
                         double (&out)[kRows][kPanel]) {
  double acc[R][kPanel] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* b = panel + p * kPanel;
    for (std::size_t r = 0; r < R; ++r) {
      const double av = a[r * rs + p * cs];
      for (std::size_t j = 0; j < kPanel; ++j) acc[r][j] = std::fma(av, b[j], acc[r][j]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) std::memcpy(out[r], acc[r], sizeof(acc[r]));
}
#endif

void store(double (&tile)[kRows][kPanel], std::size_t rows, std::size_t width, double* c, std::size_t ldc,
           bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = c + r * ldc;
    if (accumulate) {
      for (std::size_t j = 0; j < width; ++j) dst[j] += tile[r][j];
    } else {
      for (std::size_t j = 0; j < width; ++j) dst[j] = tile[r][j];
    }
  }
}

// C[m, n] (+)= A B where A(i, p) = a[i * a_rs + p * a_cs] and B(p, j) = b[p * b_rs + j * b_cs].
void strided(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_rs, std::size_t a_cs,
             const double* b, std::size_t b_rs, std::size_t b_cs, double* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    return;
  }
  std::vector<double> panel(k * kPanel);
  double tile[kRows][kPanel];
  for (std::size_t j0 = 0; j0 < n; j0 += kPanel) {
    const std::size_t width = std::min(kPanel, n - j0);
    for (std::size_t p = 0; p < k; ++p) {
      double* dst = panel.data() + p * kPanel;
      for (std::size_t j = 0; j < kPanel; ++j) dst[j] = j < width ? b[p * b_rs + (j0 + j) * b_cs] : 0.0;
    }
    std::size_t i0 = 0;
    for (; i0 + kRows <= m; i0 += kRows) {
      micro_kernel<kRows>(k, a + i0 * a_rs, a_rs, a_cs, panel.data(), tile);
      store(tile, kRows, width, c + i0 * ldc + j0, ldc, accumulate);
    }
    for (; i0 < m; ++i0) {
      micro_kernel<1>(k, a + i0 * a_rs, a_rs, a_cs, panel.data(), tile);
      store(tile, 1, width, c + i0 * ldc + j0, ldc, accumulate);
    }
  }
}

}  // namespace

void nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
        std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  strided(m, n, k, a, lda, 1, b, ldb, 1, c, ldc, accumulate);
}

void nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
        std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  strided(m, n, k, a, lda, 1, b, 1, ldb, c, ldc, accumulate);
}

void tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
        std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  strided(m, n, k, a, 1, lda, b, ldb, 1, c, ldc, accumulate);
}

}  // namespace msgen::gemm
