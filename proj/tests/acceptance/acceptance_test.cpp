// End-to-end acceptance suite. Each case prints one PASS line (reaching the
// end of a case means every gate in it held); doctest REQUIREs are the gates.

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "ssdd/artifact.hpp"
#include "ssdd/dataset.hpp"
#include "ssdd/distill.hpp"
#include "ssdd/eval.hpp"
#include "support/finite_diff.hpp"
#include "support/oracles.hpp"
#include "support/test_models.hpp"

using namespace ssdd;
using testsupport::grad_check;
using testsupport::IdentityExtractor;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void pass(int criterion, const char* detail) {
  std::printf("[criterion %d] PASS: %s\n", criterion, detail);
  std::fflush(stdout);
}

}  // namespace

TEST_CASE("criterion 1: gradient suite across all differentiable ops") {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  double worst_op = 0.0;
  auto check_op = [&](const char* name, const std::function<Tensor()>& loss,
                      std::vector<Tensor> leaves) {
    const auto res = grad_check(loss, std::move(leaves));
    INFO("op " << name << " rel err " << res.max_rel_err);
    REQUIRE(res.max_rel_err <= 1e-5);
    worst_op = std::max(worst_op, res.max_rel_err);
  };

  for (int rep = 0; rep < 3; ++rep) {
    const int64_t m = rng.uniform_int(2, 4), k = rng.uniform_int(2, 5), n = rng.uniform_int(2, 4);
    Tensor a = Tensor::randn({m, k}, rng, 1.0, true);
    Tensor b = Tensor::randn({k, n}, rng, 1.0, true);
    Tensor w = Tensor::randn({m, n}, rng);
    check_op("matmul", [&] { return sum(mul(matmul(a, b), w)); }, {a, b});
  }
  {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor b = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor v = Tensor::randn({4}, rng, 1.0, true);
    check_op("elementwise",
             [&] {
               Tensor t = mul(add(a, b), sub(a, scale(b, 0.3)));
               t = add_rowvec(t, v);
               t = sub_rowvec(t, mean_rows(square(t)));
               return add(sum(t), mean_all(square(t)));
             },
             {a, b, v});
    Tensor pos = Tensor::from_data({3}, {0.5, 1.5, 2.5}, true);
    check_op("sqrt", [&] { return sum(sqrt_elem(pos, 1e-12)); }, {pos});
    Tensor c = Tensor::randn({4, 3}, rng, 1.0, true);
    Tensor denom = Tensor::from_data({3}, {1.2, 0.6, 2.0}, true);
    check_op("div_rowvec", [&] { return sum(square(div_rowvec(c, denom))); }, {c, denom});
    // relu probed away from the kink
    Tensor r = Tensor::from_data({5}, {-1.2, -0.4, 0.3, 0.9, 1.7}, true);
    check_op("relu", [&] { return sum(square(relu(r))); }, {r});
  }
  {
    Tensor x = Tensor::randn({2, 2, 5, 5}, rng, 1.0, true);
    Tensor w = Tensor::randn({3, 2, 3, 3}, rng, 0.4, true);
    Tensor probe = Tensor::randn({2, 3, 5, 5}, rng);
    check_op("conv2d", [&] { return sum(mul(conv2d(x, w, 1), probe)); }, {x, w});
    Tensor gamma = Tensor::from_data({2}, {1.1, 0.7}, true);
    Tensor beta = Tensor::from_data({2}, {0.2, -0.1}, true);
    Tensor probe2 = Tensor::randn({2, 2, 5, 5}, rng);
    check_op("batchnorm2d",
             [&] { return sum(mul(batchnorm2d(x, gamma, beta), probe2)); }, {x, gamma, beta});
    Tensor y = Tensor::randn({2, 1, 4, 4}, rng, 1.0, true);
    check_op("avgpool2d", [&] { return sum(square(avgpool2d(y, 2))); }, {y});
    Tensor probe3 = Tensor::randn({2, 1, 6, 6}, rng);
    check_op("bilinear_resize",
             [&] { return sum(mul(bilinear_resize(y, 6, 6), probe3)); }, {y});
    Tensor probe4 = Tensor::randn({2, 1, 4, 4}, rng);
    check_op("gather/rotate",
             [&] {
               return sum(mul(apply_transform({TransformKind::Rotate90}, y), probe4));
             },
             {y});
    Tensor probe5 = Tensor::randn({2, 1, 4, 4}, rng);
    check_op("crop+resize",
             [&] {
               return sum(mul(apply_transform({TransformKind::CropCenter, 3}, y), probe5));
             },
             {y});
  }
  {
    Tensor pred = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor target = Tensor::randn({3, 4}, rng, 1.0, true);
    check_op("mse", [&] { return mse(pred, target); }, {pred, target});
    Tensor logits = Tensor::randn({4, 3}, rng, 1.0, true);
    std::vector<int> labels = {0, 2, 1, 1};
    check_op("softmax_xent", [&] { return softmax_xent(logits, labels); }, {logits});
    Tensor z1 = Tensor::randn({5, 3}, rng, 1.0, true);
    Tensor z2 = Tensor::randn({5, 3}, rng, 1.0, true);
    check_op("barlow_twins", [&] { return barlow_twins_loss(z1, z2, 0.2); }, {z1, z2});
  }
  {
    const int64_t n = 4;
    Tensor g = Tensor::randn({n, n}, rng);
    std::vector<double> spd(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double acc = i == j ? 2.0 : 0.0;
        for (int64_t p = 0; p < n; ++p) acc += g.data()[i * n + p] * g.data()[j * n + p];
        spd[static_cast<size_t>(i * n + j)] = acc;
      }
    Tensor a = Tensor::from_data({n, n}, spd, true);
    Tensor b = Tensor::randn({n, 2}, rng, 1.0, true);
    check_op("solve_linear", [&] { return sum(square(solve_linear(a, b))); }, {a, b});
  }
  {
    Tensor x = Tensor::randn({3, 2, 2}, rng, 1.0, true);
    Tensor w = Tensor::randn({3, 4}, rng);
    check_op("reshape/transpose/concat/slice",
             [&] {
               Tensor flat = reshape(x, {3, 4});
               Tensor t = transpose(transpose(flat));
               Tensor c = concat_rows({slice_rows(t, 0, 2), slice_rows(t, 1, 3)});
               return sum(mul(slice_rows(c, 1, 4), w));
             },
             {x});
  }

  // composite outer objective w.r.t. all five parameter groups
  double composite_err = 0.0;
  {
    Parameterization p;
    p.image_bases.geom = {1, 4, 4};
    p.image_bases.scale = 2;
    p.image_bases.basis = Tensor::randn({2, 4}, rng, 1.0, true);
    p.image_bases.mean = Tensor::randn({4}, rng, 0.1);
    p.image_coeffs = Tensor::randn({3, 2}, rng, 1.0, true);
    p.rep_bases.basis = Tensor::randn({2, 3}, rng, 1.0, true);
    p.rep_bases.mean = Tensor::randn({3}, rng, 0.1);
    p.rep_coeffs.base = Tensor::randn({3, 2}, rng, 1.0, true);
    p.rep_coeffs.aug = {Tensor::randn({3, 2}, rng, 1.0, true)};
    p.spec.transforms = {{TransformKind::Rotate90}};
    BasisDistillModel model(p);
    Rng mrng(1002);
    ConvNetExtractor f({.in_channels = 1, .image_hw = 4, .depth = 1, .width = 1}, mrng);
    Tensor x_real = Tensor::randn({2, 1, 4, 4}, mrng);
    Tensor y_teacher = Tensor::randn({2, 3}, mrng);
    auto loss = [&] {
      auto [xs, ys] = model.generate();
      return krr_outer_loss(f, xs, ys, x_real, y_teacher, 0.05);
    };
    auto leaves = model.trainable();
    REQUIRE(leaves.size() == 5);
    const auto res = grad_check(loss, leaves, 1e-5);
    composite_err = res.max_rel_err;
    REQUIRE(composite_err <= 1e-4);
  }

  const double elapsed = seconds_since(t0);
  REQUIRE(elapsed <= 120.0);
  char msg[160];
  std::snprintf(msg, sizeof(msg),
                "per-op rel err <= %.2e (gate 1e-5), composite 5-group rel err %.2e (gate 1e-4),"
                " %.1fs (gate 120s)",
                worst_op, composite_err, elapsed);
  pass(1, msg);
}

TEST_CASE("criterion 2: closed-form ridge head optimality and primal agreement") {
  Rng rng(1003);
  double worst_grad_norm = 0.0, worst_primal_gap = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const int64_t n_s = 10, d_f = 8, d_y = 3, b = 4;
    Tensor phi = Tensor::randn({n_s, d_f}, rng);
    Tensor ys = Tensor::randn({n_s, d_y}, rng);
    const double lambda = 0.05 + 0.1 * rep;

    // first-order optimality of the ridge objective at the closed-form head
    Tensor kernel = matmul(phi, transpose(phi));
    Tensor ridge = add(kernel, scale(Tensor::identity(n_s), lambda));
    Tensor alpha = solve_linear(ridge, ys);
    Tensor w_star = matmul(transpose(phi), alpha);
    Tensor resid = sub(matmul(phi, w_star), ys);
    Tensor grad = add(scale(matmul(transpose(phi), resid), 2.0), scale(w_star, 2.0 * lambda));
    double norm = 0.0;
    for (double g : grad.data()) norm += g * g;
    norm = std::sqrt(norm);
    REQUIRE(norm <= 1e-6);
    worst_grad_norm = std::max(worst_grad_norm, norm);

    // kernel-route prediction vs an independent primal solve
    IdentityExtractor f(d_f);
    Tensor xs = reshape(phi, {n_s, 1, 1, d_f});
    Tensor x_real = Tensor::randn({b, 1, 1, d_f}, rng);
    Tensor y_teacher = Tensor::zeros({b, d_y});
    const double kernel_loss = krr_outer_loss(f, xs, ys, x_real, y_teacher, lambda).item();

    std::vector<double> gram(static_cast<size_t>(d_f * d_f), 0.0);
    for (int64_t i = 0; i < n_s; ++i)
      for (int64_t p = 0; p < d_f; ++p)
        for (int64_t q = 0; q < d_f; ++q)
          gram[static_cast<size_t>(p * d_f + q)] +=
              phi.data()[i * d_f + p] * phi.data()[i * d_f + q];
    for (int64_t p = 0; p < d_f; ++p) gram[static_cast<size_t>(p * d_f + p)] += lambda;
    std::vector<double> rhs(static_cast<size_t>(d_f * d_y), 0.0);
    for (int64_t i = 0; i < n_s; ++i)
      for (int64_t p = 0; p < d_f; ++p)
        for (int64_t c = 0; c < d_y; ++c)
          rhs[static_cast<size_t>(p * d_y + c)] +=
              phi.data()[i * d_f + p] * ys.data()[i * d_y + c];
    const auto w_primal = testsupport::dense_solve(gram, rhs, d_f, d_y);
    double primal_loss = 0.0;
    for (int64_t i = 0; i < b; ++i)
      for (int64_t c = 0; c < d_y; ++c) {
        double pred = 0.0;
        for (int64_t p = 0; p < d_f; ++p)
          pred += x_real.data()[i * d_f + p] * w_primal[static_cast<size_t>(p * d_y + c)];
        primal_loss += pred * pred;
      }
    primal_loss *= 0.5 / static_cast<double>(b);
    const double gap = std::abs(kernel_loss - primal_loss);
    REQUIRE(gap <= 1e-6);
    worst_primal_gap = std::max(worst_primal_gap, gap);
  }
  char msg[160];
  std::snprintf(msg, sizeof(msg),
                "ridge gradient norm <= %.2e (gate 1e-6), kernel/primal gap <= %.2e (gate 1e-6)",
                worst_grad_norm, worst_primal_gap);
  pass(2, msg);
}

TEST_CASE("criterion 3: principal-component optimality and eigendecomposition agreement") {
  Rng rng(1004);
  // optimality against random frames
  for (int rep = 0; rep < 50; ++rep) {
    const int64_t n = rng.uniform_int(4, 20);
    const int64_t d = rng.uniform_int(2, 20);
    const int64_t k = rng.uniform_int(1, std::min(n, d));
    Tensor x = Tensor::randn({n, d}, rng);
    PCAModel m = fit_pca(x, k);
    auto frame_error = [&](const std::vector<double>& frame) {
      double err = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        std::vector<double> centered(static_cast<size_t>(d));
        for (int64_t j = 0; j < d; ++j)
          centered[static_cast<size_t>(j)] = x.data()[i * d + j] - m.mean[static_cast<size_t>(j)];
        std::vector<double> coef(static_cast<size_t>(k), 0.0);
        for (int64_t c = 0; c < k; ++c)
          for (int64_t j = 0; j < d; ++j)
            coef[static_cast<size_t>(c)] +=
                centered[static_cast<size_t>(j)] * frame[static_cast<size_t>(c * d + j)];
        for (int64_t j = 0; j < d; ++j) {
          double rec = 0.0;
          for (int64_t c = 0; c < k; ++c)
            rec += coef[static_cast<size_t>(c)] * frame[static_cast<size_t>(c * d + j)];
          const double diff = centered[static_cast<size_t>(j)] - rec;
          err += diff * diff;
        }
      }
      return err;
    };
    const double pca_err = frame_error(m.components);
    for (int f = 0; f < 100; ++f) {
      // random orthonormal frame
      std::vector<double> frame(static_cast<size_t>(k * d));
      for (int64_t r = 0; r < k; ++r) {
        std::vector<double> v(static_cast<size_t>(d));
        double norm = 0.0;
        do {
          for (auto& val : v) val = rng.normal();
          for (int64_t p = 0; p < r; ++p) {
            double dot = 0.0;
            for (int64_t j = 0; j < d; ++j)
              dot += v[static_cast<size_t>(j)] * frame[static_cast<size_t>(p * d + j)];
            for (int64_t j = 0; j < d; ++j)
              v[static_cast<size_t>(j)] -= dot * frame[static_cast<size_t>(p * d + j)];
          }
          norm = 0.0;
          for (double val : v) norm += val * val;
          norm = std::sqrt(norm);
        } while (norm <= 1e-6);
        for (int64_t j = 0; j < d; ++j)
          frame[static_cast<size_t>(r * d + j)] = v[static_cast<size_t>(j)] / norm;
      }
      REQUIRE(pca_err <= frame_error(frame) + 1e-9);
    }
  }

  // agreement with brute-force covariance eigendecomposition
  double worst_val_gap = 0.0, worst_angle = 0.0;
  for (int64_t d = 2; d <= 6; ++d) {
    const int64_t n = 28 + 3 * d;
    Tensor x = Tensor::randn({n, d}, rng);
    PCAModel m = fit_pca(x, d);
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += x.data()[i * d + j];
    for (auto& v : mean) v /= static_cast<double>(n);
    std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t a = 0; a < d; ++a)
        for (int64_t b = 0; b < d; ++b)
          cov[static_cast<size_t>(a * d + b)] +=
              (x.data()[i * d + a] - mean[static_cast<size_t>(a)]) *
              (x.data()[i * d + b] - mean[static_cast<size_t>(b)]);
    for (auto& v : cov) v /= static_cast<double>(n - 1);
    const auto eig = testsupport::sym_eigen(cov, d);
    for (int64_t i = 0; i < d; ++i) {
      const double gap = std::abs(m.explained_variance[static_cast<size_t>(i)] -
                                  eig.values[static_cast<size_t>(i)]);
      REQUIRE(gap <= 1e-8);
      worst_val_gap = std::max(worst_val_gap, gap);
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j)
        dot += m.components[static_cast<size_t>(i * d + j)] *
               eig.vectors[static_cast<size_t>(i * d + j)];
      const double angle = std::acos(std::min(1.0, std::abs(dot)));
      REQUIRE(angle <= 1e-6);
      worst_angle = std::max(worst_angle, angle);
    }
  }
  char msg[200];
  std::snprintf(msg, sizeof(msg),
                "50x100 frame comparisons held; eigenvalue gap <= %.2e (gate 1e-8), principal "
                "angle <= %.2e rad (gate 1e-6)",
                worst_val_gap, worst_angle);
  pass(3, msg);
}

TEST_CASE("criterion 4: augmentation algebra") {
  Rng rng(1005);
  Tensor x = Tensor::randn({2, 3, 8, 8}, rng);
  auto bit_equal = [](const Tensor& a, const Tensor& b) {
    for (int64_t i = 0; i < a.numel(); ++i)
      if (a.data()[i] != b.data()[i]) return false;
    return true;
  };
  Transform r90{TransformKind::Rotate90}, r180{TransformKind::Rotate180};
  REQUIRE(bit_equal(
      apply_transform(r90, apply_transform(r90, apply_transform(r90, apply_transform(r90, x)))),
      x));
  REQUIRE(bit_equal(apply_transform(r180, apply_transform(r180, x)), x));
  for (auto kind : {TransformKind::JigsawLeftRight, TransformKind::JigsawTopBottom,
                    TransformKind::JigsawBoth}) {
    Transform t{kind};
    REQUIRE(bit_equal(apply_transform(t, apply_transform(t, x)), x));
  }

  // permutation Jacobians on 4x4 probes: each basis image maps to a basis image
  for (auto kind : {TransformKind::Rotate90, TransformKind::Rotate180, TransformKind::Rotate270,
                    TransformKind::JigsawLeftRight, TransformKind::JigsawTopBottom,
                    TransformKind::JigsawBoth}) {
    std::vector<int> hit(16, 0);
    for (int64_t p = 0; p < 16; ++p) {
      std::vector<double> basis(16, 0.0);
      basis[static_cast<size_t>(p)] = 1.0;
      Tensor col = apply_transform({kind}, Tensor::from_data({1, 1, 4, 4}, basis));
      int ones = 0;
      int where = -1;
      for (int64_t i = 0; i < 16; ++i) {
        if (col.data()[i] == 1.0) {
          ++ones;
          where = static_cast<int>(i);
        } else {
          REQUIRE(col.data()[i] == 0.0);
        }
      }
      REQUIRE(ones == 1);
      ++hit[static_cast<size_t>(where)];
    }
    for (int h : hit) REQUIRE(h == 1);  // a permutation matrix: one 1 per row and column
  }

  // crop + resize gradient
  Tensor y = Tensor::randn({2, 1, 6, 6}, rng, 1.0, true);
  Tensor probe = Tensor::randn({2, 1, 6, 6}, rng);
  for (auto kind : {TransformKind::CropTopLeft, TransformKind::CropBottomRight,
                    TransformKind::CropCenter}) {
    auto loss = [&] { return sum(mul(apply_transform({kind, 4}, y), probe)); };
    REQUIRE(grad_check(loss, {y}).max_rel_err <= 1e-5);
  }
  pass(4, "group laws bit-exact, permutation Jacobians verified, crop gradients <= 1e-5");
}

TEST_CASE("criterion 5: budget law for derived sample counts") {
  Rng rng(1006);
  int configs = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const int64_t c = rng.uniform_int(1, 3);
    const int64_t hw = 8 << rng.uniform_int(0, 2);  // 8, 16, 32
    const int64_t s = 1 << rng.uniform_int(0, 2);   // 1, 2, 4
    if (hw / s < 2) continue;
    const ImageGeom geom{c, hw, hw};
    const int64_t d_x_b = geom.d_x() / (s * s);
    const int64_t d_y = 8 << rng.uniform_int(0, 3);  // 8..64
    const int64_t u = rng.uniform_int(1, std::min<int64_t>(64, d_x_b));
    const int64_t v = rng.uniform_int(1, std::min<int64_t>(64, d_y));
    const int64_t hidden = rng.uniform_int(1, 8);
    const int64_t a = rng.uniform_int(0, 5);
    const int64_t n_images = rng.uniform_int(1, 200);
    const StorageBudget budget{n_images, geom.d_x()};
    const int64_t approx = approx_float_count(a, v, hidden);

    int64_t m = 0;
    try {
      m = derive_m(budget, u, v, d_x_b, d_y, approx);
    } catch (const ConfigError&) {
      continue;  // this draw cannot host a single sample; the error is the contract
    }
    ++configs;

    DistilledArtifact artifact;
    artifact.geom = geom;
    artifact.scale = static_cast<int>(s);
    artifact.d_y = d_y;
    artifact.budget_images = n_images;
    artifact.image_basis = Tensor::zeros({u, d_x_b});
    artifact.image_mean = Tensor::zeros({d_x_b});
    artifact.image_coeffs = Tensor::zeros({m, u});
    artifact.rep_basis = Tensor::zeros({v, d_y});
    artifact.rep_mean = Tensor::zeros({d_y});
    artifact.rep_coeffs = Tensor::zeros({m, v});
    Rng net_rng(7);
    for (int64_t t = 0; t < a; ++t)
      artifact.approx_nets.emplace_back(v, hidden, v, net_rng);
    artifact.approx_hidden = hidden;

    const BudgetLedger ledger = audit_budget(artifact, n_images, geom.d_x());
    REQUIRE(ledger.slack >= 0);
    REQUIRE(ledger.slack < u + v);  // one more sample would not fit
    REQUIRE(ledger.total == artifact.float_count());
    REQUIRE(ledger.total == container_payload_floats(to_container(artifact)));
  }
  REQUIRE(configs >= 100);
  char msg[120];
  std::snprintf(msg, sizeof(msg), "%d derived configs all landed slack in [0, U+V)", configs);
  pass(5, msg);
}

TEST_CASE("criterion 9: determinism and persistence") {
  // bit-identical artifacts from identical seeds
  Rng rng(1009);
  Tensor imgs = Tensor::randn({24, 1, 8, 8}, rng);
  TeacherConfig tcfg;
  tcfg.backbone = {.in_channels = 1, .image_hw = 8, .depth = 2, .width = 4};
  tcfg.rep_dim = 8;
  tcfg.epochs = 1;
  tcfg.batch_size = 12;
  tcfg.seed = 5;
  TeacherModel teacher = train_teacher(imgs, tcfg, nullptr);
  InitConfig icfg;
  icfg.u = 4;
  icfg.v = 4;
  icfg.scale = 2;
  icfg.seed = 9;
  icfg.spec = rotation_spec();
  icfg.approx_hidden = 2;
  StorageBudget budget{8, 64};
  ConvNetConfig inner{.in_channels = 1, .image_hw = 8, .depth = 2, .width = 4};
  DistillConfig dcfg;
  dcfg.outer_iterations = 8;
  dcfg.pool.size = 2;
  dcfg.pool.max_steps = 3;
  dcfg.real_batch = 8;
  dcfg.seed = 13;

  auto build = [&] {
    DistillResult r = run_distillation(imgs, teacher, icfg, budget, inner, dcfg);
    ApproxTrainConfig acfg;
    acfg.hidden = 2;
    acfg.steps = 30;
    acfg.seed = 17;
    auto nets = train_approx(r.param.rep_coeffs.base, r.param.rep_coeffs.aug, acfg).nets;
    return to_container(make_artifact(r.param, std::move(nets), 2, 8, {})).serialize();
  };
  const auto bytes_a = build();
  const auto bytes_b = build();
  REQUIRE(bytes_a.size() == bytes_b.size());
  REQUIRE(bytes_a == bytes_b);

  // byte-exact serialize/deserialize round trip
  Container back = Container::deserialize(bytes_a);
  REQUIRE(back.serialize() == bytes_a);

  // corruption is rejected, wherever the flip lands
  Rng flip_rng(23);
  for (int rep = 0; rep < 8; ++rep) {
    auto corrupted = bytes_a;
    const auto at = static_cast<size_t>(
        flip_rng.uniform_int(8, static_cast<int64_t>(corrupted.size()) - 1));
    corrupted[at] ^= 0x10;
    REQUIRE_THROWS_AS(Container::deserialize(corrupted), IoError);
  }
  pass(9, "seeded reruns byte-identical; round trip byte-exact; 8/8 corruptions rejected");
}
