#include "ssdd/parameterization.hpp"

#include <algorithm>
#include <sstream>

namespace ssdd {

int64_t approx_float_count(int64_t num_augmentations, int64_t v, int64_t hidden) {
  return num_augmentations * (v * hidden + hidden + hidden * v + v);
}

int64_t derive_m(const StorageBudget& budget, int64_t u, int64_t v, int64_t d_x_b, int64_t d_y,
                 int64_t approx_floats, bool count_means) {
  const int64_t total = budget.total_floats();
  const int64_t means = count_means ? d_x_b + d_y : 0;
  const int64_t fixed = u * d_x_b + v * d_y + means + approx_floats;
  const int64_t residual = total - fixed;
  const int64_t per_sample = u + v;
  const int64_t m = residual >= 0 ? residual / per_sample : -1;
  if (m < 1) {
    std::ostringstream os;
    os << "derive_m: budget " << budget.n_images << "*" << budget.d_x << " = " << total
       << " floats cannot host one sample: bases " << u << "*" << d_x_b << " + " << v << "*"
       << d_y << ", means " << means << ", approximation nets " << approx_floats
       << " leave residual " << residual << " for " << per_sample << " floats per sample";
    throw ConfigError(os.str());
  }
  return m;
}

Tensor reconstruct_images(const Tensor& coeffs, const ImageBases& bases) {
  if (coeffs.ndim() != 2 || coeffs.dim(1) != bases.count())
    throw ShapeError("reconstruct_images: coefficients " + shape_str(coeffs.shape()) +
                     " do not match " + std::to_string(bases.count()) + " bases");
  const auto& g = bases.geom;
  Tensor flat = add_rowvec(matmul(coeffs, bases.basis), bases.mean);
  Tensor small = reshape(flat, {coeffs.dim(0), g.c, g.h / bases.scale, g.w / bases.scale});
  return upsample_bilinear(small, bases.scale);
}

Tensor reconstruct_targets(const RepCoefficients& coeffs, const RepBases& bases) {
  if (coeffs.base.ndim() != 2 || coeffs.base.dim(1) != bases.count())
    throw ShapeError("reconstruct_targets: coefficients " + shape_str(coeffs.base.shape()) +
                     " do not match " + std::to_string(bases.count()) + " bases");
  for (const auto& block : coeffs.aug)
    if (block.shape() != coeffs.base.shape())
      throw ContractError("reconstruct_targets: augmented block shape " +
                          shape_str(block.shape()) + " differs from base " +
                          shape_str(coeffs.base.shape()));
  Tensor stacked = coeffs.base;
  if (!coeffs.aug.empty()) {
    std::vector<Tensor> blocks;
    blocks.push_back(coeffs.base);
    for (const auto& b : coeffs.aug) blocks.push_back(b);
    stacked = concat_rows(blocks);
  }
  return add_rowvec(matmul(stacked, bases.basis), bases.mean);
}

Parameterization init_from_source(const Tensor& images, const TeacherModel& teacher,
                                  const InitConfig& cfg, const StorageBudget& budget) {
  if (images.ndim() != 4) throw ShapeError("init_from_source: expects [n,c,h,w] source images");
  const int64_t n = images.dim(0);
  ImageGeom geom{images.dim(1), images.dim(2), images.dim(3)};
  if (geom.d_x() != budget.d_x)
    throw ConfigError("init_from_source: budget d_x " + std::to_string(budget.d_x) +
                      " does not match images (" + std::to_string(geom.d_x()) + ")");
  if (cfg.scale < 1 || geom.h % cfg.scale != 0 || geom.w % cfg.scale != 0)
    throw ConfigError("init_from_source: scale " + std::to_string(cfg.scale) +
                      " must divide the image sides");
  validate_spec(cfg.spec, geom.h, geom.w);

  const int64_t d_x_b = geom.d_x() / (cfg.scale * cfg.scale);
  const int64_t d_y = teacher.rep_dim();
  // Default basis counts: twice the image budget, capped by what PCA can give.
  const int64_t u = cfg.u > 0 ? cfg.u : std::min<int64_t>(2 * budget.n_images, std::min(n, d_x_b));
  const int64_t v = cfg.v > 0 ? cfg.v : std::min<int64_t>(2 * budget.n_images, std::min(n, d_y));
  if (u < 1 || u > std::min(n, d_x_b))
    throw ContractError("init_from_source: U=" + std::to_string(u) + " outside [1, min(" +
                        std::to_string(n) + "," + std::to_string(d_x_b) + ")]");
  if (v < 1 || v > std::min(n, d_y))
    throw ContractError("init_from_source: V=" + std::to_string(v) + " outside [1, min(" +
                        std::to_string(n) + "," + std::to_string(d_y) + ")]");

  const int64_t approx_floats = approx_float_count(cfg.spec.count(), v, cfg.approx_hidden);
  // The budget caps the sample count; the source size caps it again (the
  // coefficients seed from distinct real rows).
  const int64_t m = std::min(derive_m(budget, u, v, d_x_b, d_y, approx_floats), n);

  Rng rng(cfg.seed);
  Parameterization p;
  p.spec = cfg.spec;
  p.sample_indices = rng.sample_indices(n, m);

  // Image side: PCA of the pooled-down dataset, coefficients by projection.
  Tensor down = reshape(downsample_avg(images, cfg.scale), {n, d_x_b});
  PCAModel pca_x = fit_pca(down, u);
  p.image_bases.basis = Tensor::from_data({u, d_x_b}, pca_x.components, true);
  p.image_bases.mean = Tensor::from_data({d_x_b}, pca_x.mean);
  p.image_bases.scale = cfg.scale;
  p.image_bases.geom = geom;
  p.image_coeffs = pca_project(pca_x, take_rows(down, p.sample_indices)).detach(true);

  // Representation side: PCA of the teacher embedding of the whole source.
  Tensor reps = teacher.representations(images);
  PCAModel pca_y = fit_pca(reps, v);
  p.rep_bases.basis = Tensor::from_data({v, d_y}, pca_y.components, true);
  p.rep_bases.mean = Tensor::from_data({d_y}, pca_y.mean);
  p.rep_coeffs.base = pca_project(pca_y, take_rows(reps, p.sample_indices)).detach(true);

  // Augmented-view coefficients come from the teacher's view of the initial
  // reconstruction, not of the source rows.
  if (cfg.spec.count() > 0) {
    Tensor initial = reconstruct_images(p.image_coeffs.detach(), p.image_bases).detach();
    for (const auto& t : cfg.spec.transforms) {
      Tensor view = apply_transform(t, initial).detach();
      Tensor view_reps = teacher.representations(view);
      p.rep_coeffs.aug.push_back(pca_project(pca_y, view_reps).detach(true));
    }
  }

  p.degenerate_pca = pca_x.degenerate || pca_y.degenerate;
  return p;
}

}  // namespace ssdd
