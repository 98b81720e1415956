#pragma once

#include <cstdint>
#include <vector>

#include "ssdd/augment.hpp"
#include "ssdd/nn.hpp"
#include "ssdd/spectral.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd {

struct ImageGeom {
  int64_t c = 1, h = 16, w = 16;
  int64_t d_x() const { return c * h * w; }
};

// Total storage allowance: the float footprint of n_images raw images.
struct StorageBudget {
  int64_t n_images = 0;
  int64_t d_x = 0;
  int64_t total_floats() const { return n_images * d_x; }
};

// Shared image dictionary. Rows of `basis` start as the top principal
// components of the pooled-down dataset (orthonormal at initialization only;
// optimization is free to bend them). `mean` is the PCA mean and stays fixed.
struct ImageBases {
  Tensor basis;  // U x d_x_b
  Tensor mean;   // d_x_b
  int scale = 1;
  ImageGeom geom;
  int64_t count() const { return basis.dim(0); }
  int64_t basis_dim() const { return basis.dim(1); }
};

struct RepBases {
  Tensor basis;  // V x d_y
  Tensor mean;   // d_y
  int64_t count() const { return basis.dim(0); }
  int64_t dim() const { return basis.dim(1); }
};

// Per-sample weights: `base` generates the unaugmented targets, `aug[a]` the
// targets of the a-th augmented view. The aug blocks live only while
// distilling; the stored artifact replaces them with approximation networks.
struct RepCoefficients {
  Tensor base;              // m x V
  std::vector<Tensor> aug;  // A blocks, each m x V
};

struct Parameterization {
  ImageBases image_bases;
  Tensor image_coeffs;  // m x U
  RepBases rep_bases;
  RepCoefficients rep_coeffs;
  AugmentationSpec spec;
  std::vector<int64_t> sample_indices;  // rows of the source that seeded the coefficients
  bool degenerate_pca = false;
  int64_t m() const { return image_coeffs.dim(0); }
};

// Float budget of the stored approximation networks: A nets of
// V -> hidden -> V with biases.
int64_t approx_float_count(int64_t num_augmentations, int64_t v, int64_t hidden);

// Largest sample count whose coefficients still fit the budget after bases,
// means and approximation networks are paid for. Throws ConfigError (with the
// arithmetic spelled out) when not even one sample fits.
int64_t derive_m(const StorageBudget& budget, int64_t u, int64_t v, int64_t d_x_b, int64_t d_y,
                 int64_t approx_floats, bool count_means = true);

struct InitConfig {
  int64_t u = 0;  // image basis count; 0 = min(2N, rank limit)
  int64_t v = 0;  // representation basis count; 0 = same rule
  int scale = 2;
  AugmentationSpec spec;
  int64_t approx_hidden = 4;
  uint64_t seed = 1;
};

// PCA-initialized bases plus projection-initialized coefficients for a
// seed-sampled subset of the source, sized by derive_m.
Parameterization init_from_source(const Tensor& images, const TeacherModel& teacher,
                                  const InitConfig& cfg, const StorageBudget& budget);

// coeffs * basis + mean, reshaped and bilinearly upsampled to full
// resolution; differentiable in coeffs and basis.
Tensor reconstruct_images(const Tensor& coeffs, const ImageBases& bases);

// Stacked target blocks [base; aug...] * basis + mean, row order matching
// expand_batch.
Tensor reconstruct_targets(const RepCoefficients& coeffs, const RepBases& bases);

}  // namespace ssdd
