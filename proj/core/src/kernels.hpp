#pragma once

#include <cstdint>
#include <vector>

// Internal row-major matrix kernels. Hot paths in the library funnel through
// these three accumulate variants so the loop nests stay vectorizable.
namespace ssdd::kern {

// c[m,n] += a[m,k] * b[k,n]
inline void mm_nn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
                      int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m,n] += a^T * b where a is stored [k,m]
inline void mm_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
                      int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const double av = ap[i];
      double* ci = c + i * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m,n] += a * b^T where b is stored [n,k]
inline void mm_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
                      int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// In-place lower Cholesky of symmetric positive definite a[n,n].
// Returns false when a pivot is not strictly positive.
bool cholesky_lower(std::vector<double>& a, int64_t n);

// Solves L L^T x = b with b[n,m] row-major, in place.
void cholesky_solve(const std::vector<double>& l, int64_t n, double* b, int64_t m);

}  // namespace ssdd::kern
