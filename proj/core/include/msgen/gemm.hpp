// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace msgen::gemm {

// Row-major matrix products. Every output element is the fused multiply-add
// chain over the inner dimension in increasing order, starting from +0, so a
// row of the result is bitwise independent of how many other rows are computed
// alongside it. When `accumulate` is set the finished sum is added to C.

/// C[m,n] (+)= A[m,k] * B[k,n]
void nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
        std::size_t ldb, double* c, std::size_t ldc, bool accumulate = false);

/// C[m,n] (+)= A[m,k] * B[n,k]^T
void nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
        std::size_t ldb, double* c, std::size_t ldc, bool accumulate = false);

/// C[m,n] (+)= A[k,m]^T * B[k,n]
void tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
        std::size_t ldb, double* c, std::size_t ldc, bool accumulate = false);

}  // namespace msgen::gemm
