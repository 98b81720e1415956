#pragma once

#include <cstdint>
#include <vector>

#include "ssdd/tensor.hpp"

namespace ssdd {

// Principal components of a row-sample matrix. Rows of `components` are the
// directions in descending explained-variance order and stay orthonormal;
// when the data rank is below k the trailing rows are an arbitrary
// orthonormal completion with zero variance and `degenerate` is set.
struct PCAModel {
  int64_t dim = 0;
  int64_t k = 0;
  std::vector<double> mean;                // dim
  std::vector<double> components;          // k x dim
  std::vector<double> explained_variance;  // k, non-increasing
  bool degenerate = false;
};

// Top-k PCA of x[n,d] with row centering. SVD runs as one-sided Jacobi on
// whichever side of the centered matrix is smaller.
PCAModel fit_pca(const Tensor& x, int64_t k);

// Coefficients (x - mean) * components^T, shape [n,k].
Tensor pca_project(const PCAModel& model, const Tensor& x);

// coeffs * components + mean, shape [n,dim].
Tensor pca_reconstruct(const PCAModel& model, const Tensor& coeffs);

struct KMeansResult {
  Tensor centroids;                  // k x d
  std::vector<int64_t> assignment;   // n, cluster index per sample
  std::vector<int64_t> medoids;      // k, index of the sample nearest each centroid
  std::vector<double> inertia_trace; // total within-cluster squared distance per Lloyd pass
  double inertia = 0.0;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding, run to assignment fixpoint or 300
// iterations. Empty clusters are re-seeded at the point farthest from its
// assigned centroid, deterministically for a given seed.
KMeansResult kmeans(const Tensor& x, int64_t k, uint64_t seed);

}  // namespace ssdd
