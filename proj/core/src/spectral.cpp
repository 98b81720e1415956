#include "ssdd/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ssdd/rng.hpp"

namespace ssdd {

namespace {

// One-sided Jacobi: orthogonalizes the columns of a (rows x cols, row-major)
// in place and accumulates the applied rotations in v (cols x cols). On exit
// a = U * diag(sigma) with sigma the column norms and v's columns the right
// singular vectors.
void onesided_jacobi(std::vector<double>& a, int64_t rows, int64_t cols, std::vector<double>& v) {
  v.assign(static_cast<size_t>(cols * cols), 0.0);
  for (int64_t i = 0; i < cols; ++i) v[static_cast<size_t>(i * cols + i)] = 1.0;

  const double tol = 1e-14;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (int64_t p = 0; p < cols; ++p)
      for (int64_t q = p + 1; q < cols; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int64_t r = 0; r < rows; ++r) {
          const double ap = a[static_cast<size_t>(r * cols + p)];
          const double aq = a[static_cast<size_t>(r * cols + q)];
          alpha += ap * ap;
          beta += aq * aq;
          gamma += ap * aq;
        }
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int64_t r = 0; r < rows; ++r) {
          const double ap = a[static_cast<size_t>(r * cols + p)];
          const double aq = a[static_cast<size_t>(r * cols + q)];
          a[static_cast<size_t>(r * cols + p)] = c * ap - s * aq;
          a[static_cast<size_t>(r * cols + q)] = s * ap + c * aq;
        }
        for (int64_t r = 0; r < cols; ++r) {
          const double vp = v[static_cast<size_t>(r * cols + p)];
          const double vq = v[static_cast<size_t>(r * cols + q)];
          v[static_cast<size_t>(r * cols + p)] = c * vp - s * vq;
          v[static_cast<size_t>(r * cols + q)] = s * vp + c * vq;
        }
      }
    if (!rotated) break;
  }
}

// Gram-Schmidt completion against the rows already in `components`.
void complete_orthonormal(std::vector<double>& components, int64_t have, int64_t want,
                          int64_t dim) {
  int64_t next_axis = 0;
  for (int64_t row = have; row < want; ++row) {
    while (true) {
      if (next_axis >= dim)
        throw NumericError("fit_pca: failed to complete an orthonormal basis");
      std::vector<double> cand(static_cast<size_t>(dim), 0.0);
      cand[static_cast<size_t>(next_axis++)] = 1.0;
      for (int64_t r = 0; r < row; ++r) {
        double dot = 0.0;
        for (int64_t j = 0; j < dim; ++j)
          dot += cand[static_cast<size_t>(j)] * components[static_cast<size_t>(r * dim + j)];
        for (int64_t j = 0; j < dim; ++j)
          cand[static_cast<size_t>(j)] -= dot * components[static_cast<size_t>(r * dim + j)];
      }
      double norm = 0.0;
      for (double c : cand) norm += c * c;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (int64_t j = 0; j < dim; ++j)
          components[static_cast<size_t>(row * dim + j)] = cand[static_cast<size_t>(j)] / norm;
        break;
      }
    }
  }
}

}  // namespace

PCAModel fit_pca(const Tensor& x, int64_t k) {
  if (x.ndim() != 2) throw ShapeError("fit_pca: expects [n,d], got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), d = x.dim(1);
  if (k < 1 || k > std::min(n, d))
    throw ContractError("fit_pca: k=" + std::to_string(k) + " outside [1, min(" +
                        std::to_string(n) + "," + std::to_string(d) + ")]");

  PCAModel model;
  model.dim = d;
  model.k = k;
  model.mean.assign(static_cast<size_t>(d), 0.0);
  const auto xd = x.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      model.mean[static_cast<size_t>(j)] += xd[static_cast<size_t>(i * d + j)];
  for (auto& m : model.mean) m /= static_cast<double>(n);

  std::vector<double> centered(static_cast<size_t>(n * d));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      centered[static_cast<size_t>(i * d + j)] =
          xd[static_cast<size_t>(i * d + j)] - model.mean[static_cast<size_t>(j)];

  // Right singular vectors land in `dirs` as rows, paired with sigma.
  std::vector<double> sigma;
  std::vector<double> dirs;  // r x d rows, r = min(n,d)
  const int64_t r = std::min(n, d);
  if (d <= n) {
    std::vector<double> v;
    onesided_jacobi(centered, n, d, v);
    sigma.assign(static_cast<size_t>(d), 0.0);
    for (int64_t j = 0; j < d; ++j) {
      double norm = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double val = centered[static_cast<size_t>(i * d + j)];
        norm += val * val;
      }
      sigma[static_cast<size_t>(j)] = std::sqrt(norm);
    }
    dirs.assign(static_cast<size_t>(d * d), 0.0);
    for (int64_t j = 0; j < d; ++j)
      for (int64_t i = 0; i < d; ++i)
        dirs[static_cast<size_t>(j * d + i)] = v[static_cast<size_t>(i * d + j)];
  } else {
    // Work on the transpose: columns of X^T rotate into left singular vectors
    // of X, and X^T * W / sigma recovers the right singular vectors.
    std::vector<double> at(static_cast<size_t>(d * n));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j)
        at[static_cast<size_t>(j * n + i)] = centered[static_cast<size_t>(i * d + j)];
    std::vector<double> w;
    onesided_jacobi(at, d, n, w);
    sigma.assign(static_cast<size_t>(n), 0.0);
    dirs.assign(static_cast<size_t>(n * d), 0.0);
    for (int64_t j = 0; j < n; ++j) {
      double norm = 0.0;
      for (int64_t i = 0; i < d; ++i) {
        const double val = at[static_cast<size_t>(i * n + j)];
        norm += val * val;
      }
      norm = std::sqrt(norm);
      sigma[static_cast<size_t>(j)] = norm;
      if (norm > 0.0)
        for (int64_t i = 0; i < d; ++i)
          dirs[static_cast<size_t>(j * d + i)] = at[static_cast<size_t>(i * n + j)] / norm;
    }
  }

  std::vector<int64_t> order(static_cast<size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return sigma[static_cast<size_t>(a)] > sigma[static_cast<size_t>(b)];
  });

  const double sigma_max = sigma.empty() ? 0.0 : sigma[static_cast<size_t>(order[0])];
  const double rank_tol =
      sigma_max * static_cast<double>(std::max(n, d)) * std::numeric_limits<double>::epsilon();

  model.components.assign(static_cast<size_t>(k * d), 0.0);
  model.explained_variance.assign(static_cast<size_t>(k), 0.0);
  int64_t kept = 0;
  for (int64_t rank = 0; rank < std::min(k, r); ++rank) {
    const int64_t src = order[static_cast<size_t>(rank)];
    const double s = sigma[static_cast<size_t>(src)];
    if (s <= rank_tol || s == 0.0) break;
    for (int64_t j = 0; j < d; ++j)
      model.components[static_cast<size_t>(kept * d + j)] = dirs[static_cast<size_t>(src * d + j)];
    model.explained_variance[static_cast<size_t>(kept)] =
        n > 1 ? s * s / static_cast<double>(n - 1) : 0.0;
    ++kept;
  }
  if (kept < k) {
    model.degenerate = true;
    complete_orthonormal(model.components, kept, k, d);
  }
  return model;
}

Tensor pca_project(const PCAModel& model, const Tensor& x) {
  if (x.ndim() != 2 || x.dim(1) != model.dim)
    throw ShapeError("pca_project: expects [n," + std::to_string(model.dim) + "], got " +
                     shape_str(x.shape()));
  const int64_t n = x.dim(0), d = model.dim, k = model.k;
  std::vector<double> out(static_cast<size_t>(n * k), 0.0);
  const auto xd = x.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < k; ++c) {
      double acc = 0.0;
      for (int64_t j = 0; j < d; ++j)
        acc += (xd[static_cast<size_t>(i * d + j)] - model.mean[static_cast<size_t>(j)]) *
               model.components[static_cast<size_t>(c * d + j)];
      out[static_cast<size_t>(i * k + c)] = acc;
    }
  return Tensor::from_data({n, k}, std::move(out));
}

Tensor pca_reconstruct(const PCAModel& model, const Tensor& coeffs) {
  if (coeffs.ndim() != 2 || coeffs.dim(1) != model.k)
    throw ShapeError("pca_reconstruct: expects [n," + std::to_string(model.k) + "], got " +
                     shape_str(coeffs.shape()));
  const int64_t n = coeffs.dim(0), d = model.dim, k = model.k;
  std::vector<double> out(static_cast<size_t>(n * d));
  const auto cd = coeffs.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double acc = model.mean[static_cast<size_t>(j)];
      for (int64_t c = 0; c < k; ++c)
        acc += cd[static_cast<size_t>(i * k + c)] *
               model.components[static_cast<size_t>(c * d + j)];
      out[static_cast<size_t>(i * d + j)] = acc;
    }
  return Tensor::from_data({n, d}, std::move(out));
}

namespace {

double sq_dist(const double* a, const double* b, int64_t d) {
  double acc = 0.0;
  for (int64_t j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

KMeansResult kmeans(const Tensor& x, int64_t k, uint64_t seed) {
  if (x.ndim() != 2) throw ShapeError("kmeans: expects [n,d], got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), d = x.dim(1);
  if (k < 1 || k > n)
    throw ContractError("kmeans: k=" + std::to_string(k) + " must be in [1," + std::to_string(n) +
                        "]");
  Rng rng(seed);
  const double* xd = x.data().data();

  // k-means++ seeding
  std::vector<double> centroids(static_cast<size_t>(k * d));
  std::vector<double> best_d2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  {
    const int64_t first = rng.uniform_int(0, n - 1);
    std::copy_n(xd + first * d, d, centroids.data());
    for (int64_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double d2 = sq_dist(xd + i * d, centroids.data() + (c - 1) * d, d);
        best_d2[static_cast<size_t>(i)] = std::min(best_d2[static_cast<size_t>(i)], d2);
        total += best_d2[static_cast<size_t>(i)];
      }
      int64_t pick = 0;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double run = 0.0;
        pick = n - 1;
        for (int64_t i = 0; i < n; ++i) {
          run += best_d2[static_cast<size_t>(i)];
          if (run >= target) {
            pick = i;
            break;
          }
        }
      } else {
        pick = rng.uniform_int(0, n - 1);
      }
      std::copy_n(xd + pick * d, d, centroids.data() + c * d);
    }
  }

  KMeansResult result;
  result.assignment.assign(static_cast<size_t>(n), 0);
  std::vector<int64_t> counts(static_cast<size_t>(k), 0);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = iter == 0;
    double inertia = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      int64_t best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (int64_t c = 0; c < k; ++c) {
        const double d2 = sq_dist(xd + i * d, centroids.data() + c * d, d);
        if (d2 < best_dist) {
          best_dist = d2;
          best = c;
        }
      }
      if (result.assignment[static_cast<size_t>(i)] != best) changed = true;
      result.assignment[static_cast<size_t>(i)] = best;
      inertia += best_dist;
    }
    result.inertia_trace.push_back(inertia);
    result.inertia = inertia;
    result.iterations = iter + 1;
    if (!changed && iter > 0) break;

    std::fill(counts.begin(), counts.end(), 0);
    std::fill(centroids.begin(), centroids.end(), 0.0);
    for (int64_t i = 0; i < n; ++i) {
      const int64_t c = result.assignment[static_cast<size_t>(i)];
      ++counts[static_cast<size_t>(c)];
      for (int64_t j = 0; j < d; ++j)
        centroids[static_cast<size_t>(c * d + j)] += xd[i * d + j];
    }
    for (int64_t c = 0; c < k; ++c)
      if (counts[static_cast<size_t>(c)] > 0)
        for (int64_t j = 0; j < d; ++j)
          centroids[static_cast<size_t>(c * d + j)] /=
              static_cast<double>(counts[static_cast<size_t>(c)]);

    // Empty clusters grab the point currently farthest from its centroid.
    for (int64_t c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      int64_t far = 0;
      double far_dist = -1.0;
      for (int64_t i = 0; i < n; ++i) {
        const int64_t own = result.assignment[static_cast<size_t>(i)];
        if (counts[static_cast<size_t>(own)] <= 1) continue;
        const double d2 = sq_dist(xd + i * d, centroids.data() + own * d, d);
        if (d2 > far_dist) {
          far_dist = d2;
          far = i;
        }
      }
      --counts[static_cast<size_t>(result.assignment[static_cast<size_t>(far)])];
      std::copy_n(xd + far * d, d, centroids.data() + c * d);
      result.assignment[static_cast<size_t>(far)] = c;
      counts[static_cast<size_t>(c)] = 1;
      changed = true;
    }
  }

  result.medoids.assign(static_cast<size_t>(k), 0);
  for (int64_t c = 0; c < k; ++c) {
    double best = std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < n; ++i) {
      const double d2 = sq_dist(xd + i * d, centroids.data() + c * d, d);
      if (d2 < best) {
        best = d2;
        result.medoids[static_cast<size_t>(c)] = i;
      }
    }
  }
  result.centroids = Tensor::from_data({k, d}, std::move(centroids));
  return result;
}

}  // namespace ssdd
