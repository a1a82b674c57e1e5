#pragma once

#include <cstdint>

namespace lns::blas {

/// Row-major dgemm: C = alpha * op(A) * op(B) + beta * C.
/// OpenBLAS is pinned to one thread; parallelism comes from the OpenMP loops
/// that call this per batch element.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          double alpha, const double* a, int64_t lda, const double* b, int64_t ldb,
          double beta, double* c, int64_t ldc);

} // namespace lns::blas
