#include "kernels.hpp"

#include <cmath>

namespace ssdd::kern {

bool cholesky_lower(std::vector<double>& a, int64_t n) {
  for (int64_t j = 0; j < n; ++j) {
    double diag = a[static_cast<size_t>(j * n + j)];
    for (int64_t p = 0; p < j; ++p) {
      const double l = a[static_cast<size_t>(j * n + p)];
      diag -= l * l;
    }
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double ljj = std::sqrt(diag);
    a[static_cast<size_t>(j * n + j)] = ljj;
    for (int64_t i = j + 1; i < n; ++i) {
      double v = a[static_cast<size_t>(i * n + j)];
      const double* ri = a.data() + i * n;
      const double* rj = a.data() + j * n;
      for (int64_t p = 0; p < j; ++p) v -= ri[p] * rj[p];
      a[static_cast<size_t>(i * n + j)] = v / ljj;
    }
  }
  // zero strict upper triangle so the factor can be reused verbatim
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) a[static_cast<size_t>(i * n + j)] = 0.0;
  return true;
}

void cholesky_solve(const std::vector<double>& l, int64_t n, double* b, int64_t m) {
  // forward: L y = b, rows of b are length-m vectors
  for (int64_t i = 0; i < n; ++i) {
    double* bi = b + i * m;
    for (int64_t p = 0; p < i; ++p) {
      const double lip = l[static_cast<size_t>(i * n + p)];
      if (lip == 0.0) continue;
      const double* bp = b + p * m;
      for (int64_t c = 0; c < m; ++c) bi[c] -= lip * bp[c];
    }
    const double inv = 1.0 / l[static_cast<size_t>(i * n + i)];
    for (int64_t c = 0; c < m; ++c) bi[c] *= inv;
  }
  // backward: L^T x = y
  for (int64_t i = n - 1; i >= 0; --i) {
    double* bi = b + i * m;
    for (int64_t p = i + 1; p < n; ++p) {
      const double lpi = l[static_cast<size_t>(p * n + i)];
      if (lpi == 0.0) continue;
      const double* bp = b + p * m;
      for (int64_t c = 0; c < m; ++c) bi[c] -= lpi * bp[c];
    }
    const double inv = 1.0 / l[static_cast<size_t>(i * n + i)];
    for (int64_t c = 0; c < m; ++c) bi[c] *= inv;
  }
}

}  // namespace ssdd::kern
