#include "gemm.hpp"

#include <algorithm>
#include <cstddef>
#include <mutex>
#include <vector>

extern "C" void openblas_set_num_threads(int num_threads);

namespace vseg::detail {

void init_blas() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (beta == 0.0) {
      std::fill(ci, ci + n, 0.0);
    } else if (beta != 1.0) {
      for (int j = 0; j < n; ++j) ci[j] *= beta;
    }
  }
  // Row-major op(B) with unit stride along n.
  std::vector<double> bt;
  const double* bp = b;
  std::ptrdiff_t ldbp = ldb;
  if (tb) {
    bt.resize(static_cast<std::size_t>(k) * static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::ptrdiff_t>(j) * ldb + p];
    bp = bt.data();
    ldbp = n;
  }
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int p = 0; p < k; ++p) {
      const double av = alpha * (ta ? a[static_cast<std::ptrdiff_t>(p) * lda + i] : a[static_cast<std::ptrdiff_t>(i) * lda + p]);
      if (av == 0.0) continue;
      const double* bpr = bp + p * ldbp;
      for (int j = 0; j < n; ++j) ci[j] += av * bpr[j];
    }
  }
}

}  // namespace vseg::detail
