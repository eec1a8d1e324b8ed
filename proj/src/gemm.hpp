#pragma once

#include <cblas.h>

namespace vseg::detail {

/// Pins the BLAS backend to one thread so every reduction has a fixed order.
void init_blas();

/// Row-major C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
                 int ldb, float beta, float* c, int ldc) {
  init_blas();
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}

/// Portable double-precision kernel. OpenBLAS 0.3.20's Cooperlake dgemm
/// returns wrong products for some shapes (n >= 250 with m >= 4), and the
/// double path only serves gradient verification.
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc);

}  // namespace vseg::detail
