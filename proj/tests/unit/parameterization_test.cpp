#include <doctest.h>

#include <cmath>

#include "ssdd/parameterization.hpp"
#include "support/finite_diff.hpp"
#include "support/oracles.hpp"

using namespace ssdd;
using testsupport::grad_check;

namespace {

// Untrained but frozen teacher: enough for initialization mechanics.
TeacherModel tiny_teacher(const Tensor& images, int64_t rep_dim, uint64_t seed) {
  TeacherConfig cfg;
  cfg.backbone = {.in_channels = static_cast<int>(images.dim(1)),
                  .image_hw = static_cast<int>(images.dim(2)),
                  .depth = 2,
                  .width = 4};
  cfg.rep_dim = rep_dim;
  cfg.seed = seed;
  Rng rng(seed);
  TeacherModel teacher(cfg, rng);
  teacher.freeze(images);
  return teacher;
}

}  // namespace

TEST_CASE("derive_m reproduces the reference arithmetic") {
  StorageBudget budget{100, 3072};
  // bases-only accounting: floor((307200 - 153600 - 102400) / 400)
  CHECK(derive_m(budget, 200, 200, 768, 512, 0, /*count_means=*/false) == 128);
  // means on by default: two extra rows of floats
  CHECK(derive_m(budget, 200, 200, 768, 512, 0) ==
        (307200 - 153600 - 768 - 102400 - 512) / 400);
}

TEST_CASE("derive_m boundary and monotonicity") {
  StorageBudget budget{100, 3072};
  const int64_t residual = 307200 - 153600 - 768 - 102400 - 512;
  CHECK_THROWS_AS(derive_m(budget, 200, 200, 768, 512, residual), ConfigError);
  const int64_t m1 = derive_m(budget, 200, 200, 768, 512, 0);
  const int64_t m2 = derive_m(StorageBudget{200, 3072}, 200, 200, 768, 512, 0);
  CHECK(m2 > m1);
}

TEST_CASE("reconstruct_images: zero coefficients give the upsampled mean") {
  Rng rng(81);
  ImageBases bases;
  bases.geom = {1, 8, 8};
  bases.scale = 2;
  bases.basis = Tensor::randn({3, 16}, rng);
  bases.mean = Tensor::randn({16}, rng);
  Tensor imgs = reconstruct_images(Tensor::zeros({2, 3}), bases);
  Tensor expected = upsample_bilinear(reshape(Tensor::from_data({16}, std::vector<double>(
                                                  bases.mean.data().begin(),
                                                  bases.mean.data().end())),
                                              {1, 1, 4, 4}),
                                      2);
  for (int64_t i = 0; i < 64; ++i) {
    CHECK(imgs.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-12));
    CHECK(imgs.data()[64 + i] == doctest::Approx(expected.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("reconstruct_images is linear in the coefficients") {
  Rng rng(82);
  ImageBases bases;
  bases.geom = {1, 8, 8};
  bases.scale = 2;
  bases.basis = Tensor::randn({4, 16}, rng);
  bases.mean = Tensor::zeros({16});
  Tensor c1 = Tensor::randn({3, 4}, rng);
  Tensor c2 = Tensor::randn({3, 4}, rng);
  const double a = 0.7, b = -1.3;
  std::vector<double> mix(static_cast<size_t>(c1.numel()));
  for (int64_t i = 0; i < c1.numel(); ++i) mix[static_cast<size_t>(i)] = a * c1.data()[i] + b * c2.data()[i];
  Tensor lhs = reconstruct_images(Tensor::from_data({3, 4}, mix), bases);
  Tensor r1 = reconstruct_images(c1, bases);
  Tensor r2 = reconstruct_images(c2, bases);
  for (int64_t i = 0; i < lhs.numel(); ++i)
    CHECK(std::abs(lhs.data()[i] - (a * r1.data()[i] + b * r2.data()[i])) <= 1e-10);
}

TEST_CASE("reconstruct_images gradient w.r.t. coefficients") {
  Rng rng(83);
  ImageBases bases;
  bases.geom = {1, 4, 4};
  bases.scale = 2;
  bases.basis = Tensor::randn({2, 4}, rng, 1.0, true);
  bases.mean = Tensor::zeros({4});
  Tensor coeffs = Tensor::randn({2, 2}, rng, 1.0, true);
  auto loss = [&] { return sum(reconstruct_images(coeffs, bases)); };
  CHECK(grad_check(loss, {coeffs, bases.basis}).max_rel_err <= 1e-5);
}

TEST_CASE("reconstruct_targets block semantics") {
  Rng rng(84);
  RepBases bases;
  bases.basis = Tensor::randn({3, 5}, rng);
  bases.mean = Tensor::randn({5}, rng);
  RepCoefficients coeffs;
  coeffs.base = Tensor::randn({4, 3}, rng);

  Tensor plain = reconstruct_targets(coeffs, bases);
  CHECK(plain.shape() == Shape{4, 5});

  coeffs.aug = {coeffs.base, coeffs.base};
  Tensor stacked = reconstruct_targets(coeffs, bases);
  CHECK(stacked.shape() == Shape{12, 5});
  for (int64_t i = 0; i < 20; ++i) {
    CHECK(stacked.data()[i] == doctest::Approx(plain.data()[i]));
    CHECK(stacked.data()[20 + i] == doctest::Approx(plain.data()[i]));
    CHECK(stacked.data()[40 + i] == doctest::Approx(plain.data()[i]));
  }

  coeffs.aug.push_back(Tensor::zeros({5, 3}));
  CHECK_THROWS_AS(reconstruct_targets(coeffs, bases), ContractError);
}

TEST_CASE("init_from_source on degenerate identical images") {
  Tensor imgs = Tensor::full({8, 1, 8, 8}, 0.5);
  TeacherModel teacher = tiny_teacher(imgs, 8, 3);
  InitConfig cfg;
  cfg.u = 2;
  cfg.v = 2;
  cfg.scale = 2;
  cfg.seed = 5;
  StorageBudget budget{6, 64};
  Parameterization p = init_from_source(imgs, teacher, cfg, budget);
  CHECK(p.degenerate_pca);
  const int64_t m = p.m();
  REQUIRE(m >= 2);
  for (int64_t r = 1; r < m; ++r)
    for (int64_t c = 0; c < 2; ++c)
      CHECK(p.image_coeffs.data()[r * 2 + c] ==
            doctest::Approx(p.image_coeffs.data()[c]).epsilon(1e-9));
}

TEST_CASE("init_from_source full-rank round trip at scale 1") {
  Rng rng(85);
  Tensor imgs = Tensor::randn({24, 1, 4, 4}, rng);
  TeacherModel teacher = tiny_teacher(imgs, 6, 7);
  InitConfig cfg;
  cfg.u = 16;  // = d_x_b at s=1
  cfg.v = 4;
  cfg.scale = 1;
  cfg.seed = 11;
  StorageBudget budget{30, 16};
  Parameterization p = init_from_source(imgs, teacher, cfg, budget);
  Tensor rec = reconstruct_images(p.image_coeffs, p.image_bases);
  Tensor original = take_rows(imgs, p.sample_indices);
  for (int64_t i = 0; i < rec.numel(); ++i)
    CHECK(rec.data()[i] == doctest::Approx(original.data()[i]).epsilon(1e-6));
}

TEST_CASE("init coefficients equal the normal-equations solution") {
  Rng rng(86);
  Tensor imgs = Tensor::randn({20, 1, 8, 8}, rng);
  TeacherModel teacher = tiny_teacher(imgs, 8, 9);
  InitConfig cfg;
  cfg.u = 4;
  cfg.v = 4;
  cfg.scale = 2;
  cfg.seed = 13;
  StorageBudget budget{8, 64};
  Parameterization p = init_from_source(imgs, teacher, cfg, budget);

  // brute force: solve (B B^T) c = B (x - mean) for each selected row
  Tensor down = reshape(downsample_avg(imgs, 2), {20, 16});
  const auto& basis = p.image_bases.basis;
  std::vector<double> gram(16, 0.0);
  for (int64_t a = 0; a < 4; ++a)
    for (int64_t b = 0; b < 4; ++b)
      for (int64_t j = 0; j < 16; ++j)
        gram[static_cast<size_t>(a * 4 + b)] += basis.data()[a * 16 + j] * basis.data()[b * 16 + j];
  for (int64_t r = 0; r < p.m(); ++r) {
    std::vector<double> rhs(4, 0.0);
    const int64_t src = p.sample_indices[static_cast<size_t>(r)];
    for (int64_t a = 0; a < 4; ++a)
      for (int64_t j = 0; j < 16; ++j)
        rhs[static_cast<size_t>(a)] += basis.data()[a * 16 + j] *
                                       (down.data()[src * 16 + j] - p.image_bases.mean.data()[j]);
    auto solved = testsupport::dense_solve(gram, rhs, 4, 1);
    for (int64_t a = 0; a < 4; ++a)
      CHECK(p.image_coeffs.data()[r * 4 + a] ==
            doctest::Approx(solved[static_cast<size_t>(a)]).epsilon(1e-8));
  }
}

TEST_CASE("init reconstruction beats random frames of the same rank") {
  Rng rng(87);
  Tensor imgs = Tensor::randn({16, 1, 4, 4}, rng);
  TeacherModel teacher = tiny_teacher(imgs, 6, 15);
  InitConfig cfg;
  cfg.u = 3;
  cfg.v = 3;
  cfg.scale = 1;
  cfg.seed = 17;
  StorageBudget budget{10, 16};
  Parameterization p = init_from_source(imgs, teacher, cfg, budget);

  Tensor selected = reshape(take_rows(imgs, p.sample_indices), {p.m(), 16});
  Tensor rec = reshape(reconstruct_images(p.image_coeffs, p.image_bases), {p.m(), 16});
  double pca_err = 0.0;
  for (int64_t i = 0; i < rec.numel(); ++i) {
    const double d = rec.data()[i] - selected.data()[i];
    pca_err += d * d;
  }

  for (int rep = 0; rep < 50; ++rep) {
    // random orthonormal frame via Gram-Schmidt
    std::vector<double> frame(3 * 16);
    for (int64_t r = 0; r < 3; ++r) {
      std::vector<double> v(16);
      for (auto& val : v) val = rng.normal();
      for (int64_t q = 0; q < r; ++q) {
        double dot = 0.0;
        for (int64_t j = 0; j < 16; ++j) dot += v[static_cast<size_t>(j)] * frame[static_cast<size_t>(q * 16 + j)];
        for (int64_t j = 0; j < 16; ++j) v[static_cast<size_t>(j)] -= dot * frame[static_cast<size_t>(q * 16 + j)];
      }
      double norm = 0.0;
      for (double val : v) norm += val * val;
      norm = std::sqrt(norm);
      for (int64_t j = 0; j < 16; ++j) frame[static_cast<size_t>(r * 16 + j)] = v[static_cast<size_t>(j)] / norm;
    }
    double frame_err = 0.0;
    for (int64_t i = 0; i < p.m(); ++i) {
      std::vector<double> centered(16);
      for (int64_t j = 0; j < 16; ++j)
        centered[static_cast<size_t>(j)] =
            selected.data()[i * 16 + j] - p.image_bases.mean.data()[j];
      std::vector<double> coef(3, 0.0);
      for (int64_t r = 0; r < 3; ++r)
        for (int64_t j = 0; j < 16; ++j)
          coef[static_cast<size_t>(r)] += centered[static_cast<size_t>(j)] * frame[static_cast<size_t>(r * 16 + j)];
      for (int64_t j = 0; j < 16; ++j) {
        double recon = 0.0;
        for (int64_t r = 0; r < 3; ++r) recon += coef[static_cast<size_t>(r)] * frame[static_cast<size_t>(r * 16 + j)];
        const double d = centered[static_cast<size_t>(j)] - recon;
        frame_err += d * d;
      }
    }
    CHECK(pca_err <= frame_err + 1e-9);
  }
}

TEST_CASE("augmented coefficient blocks are produced per transform") {
  Rng rng(88);
  Tensor imgs = Tensor::randn({16, 1, 8, 8}, rng);
  TeacherModel teacher = tiny_teacher(imgs, 8, 19);
  InitConfig cfg;
  cfg.u = 4;
  cfg.v = 4;
  cfg.scale = 2;
  cfg.seed = 21;
  cfg.spec = rotation_spec();
  StorageBudget budget{10, 64};
  Parameterization p = init_from_source(imgs, teacher, cfg, budget);
  CHECK(p.rep_coeffs.aug.size() == 3);
  for (const auto& block : p.rep_coeffs.aug) CHECK(block.shape() == p.rep_coeffs.base.shape());
}
