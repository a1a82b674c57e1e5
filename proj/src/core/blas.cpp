#include "lns/core/blas.hpp"

#include <cblas.h>

#include <mutex>

extern "C" void openblas_set_num_threads(int);

namespace lns::blas {

namespace {
std::once_flag g_blas_init;
}

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          double alpha, const double* a, int64_t lda, const double* b, int64_t ldb,
          double beta, double* c, int64_t ldc) {
    std::call_once(g_blas_init, [] { openblas_set_num_threads(1); });
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
                static_cast<int>(ldc));
}

} // namespace lns::blas
