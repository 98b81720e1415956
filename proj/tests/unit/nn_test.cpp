#include <doctest.h>

#include <cmath>

#include "ssdd/nn.hpp"
#include "ssdd/optim.hpp"
#include "ssdd/rng.hpp"
#include "support/finite_diff.hpp"

using namespace ssdd;
using testsupport::grad_check;

TEST_CASE("schedule endpoints") {
  CHECK(schedule_scale(Schedule::Constant, 50, 100) == 1.0);
  CHECK(schedule_scale(Schedule::LinearDecay, 0, 100) == doctest::Approx(1.0));
  CHECK(schedule_scale(Schedule::LinearDecay, 100, 100) == doctest::Approx(0.0));
  CHECK(schedule_scale(Schedule::Cosine, 100, 100) == doctest::Approx(0.0));
  CHECK(schedule_scale(Schedule::Cosine, 50, 100) == doctest::Approx(0.5));
}

TEST_CASE("sgd hand examples") {
  Tensor p = Tensor::zeros({1}, true);
  Sgd opt({p}, {.lr = 0.1, .momentum = 0.0, .weight_decay = 0.0});
  p.node()->grad = {1.0};
  opt.step();
  CHECK(p.data()[0] == doctest::Approx(-0.1));

  // momentum recurrence: two identical gradients, second step is 1.9x
  Tensor q = Tensor::zeros({1}, true);
  Sgd opt2({q}, {.lr = 0.1, .momentum = 0.9, .weight_decay = 0.0});
  q.node()->grad = {1.0};
  opt2.step();
  const double first = -q.data()[0];
  q.zero_grad();
  q.node()->grad = {1.0};
  opt2.step();
  const double second = -q.data()[0] - first;
  CHECK(first == doctest::Approx(0.1));
  CHECK(second == doctest::Approx(1.9 * 0.1));
}

TEST_CASE("adamw decay-only shrink") {
  Tensor p = Tensor::full({1}, 1.0, true);
  AdamW opt({p}, {.lr = 1e-3, .weight_decay = 0.01});
  p.node()->grad = {0.0};
  opt.step();
  CHECK(p.data()[0] == doctest::Approx(1.0 - 1e-5).epsilon(1e-12));
}

TEST_CASE("barlow twins exact zero on orthogonal standardized columns") {
  Tensor z = Tensor::from_data({4, 2}, {1, 1, 1, -1, -1, 1, -1, -1});
  Tensor loss = barlow_twins_loss(z, z, 0.005);
  CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("barlow twins on independent views approaches the diagonal term") {
  Rng rng(55);
  Tensor z1 = Tensor::randn({1000, 2}, rng);
  Tensor z2 = Tensor::randn({1000, 2}, rng);
  Tensor loss = barlow_twins_loss(z1, z2, 0.005);
  CHECK(std::abs(loss.item() - 2.0) <= 0.2);
}

TEST_CASE("barlow twins gradient vs finite differences") {
  Rng rng(56);
  Tensor z1 = Tensor::randn({5, 3}, rng, 1.0, true);
  Tensor z2 = Tensor::randn({5, 3}, rng, 1.0, true);
  auto loss = [&] { return barlow_twins_loss(z1, z2, 0.3); };
  CHECK(grad_check(loss, {z1, z2}).max_rel_err <= 1e-5);
}

TEST_CASE("barlow twins invariant to column-wise affine rescaling") {
  Rng rng(57);
  Tensor z1 = Tensor::randn({16, 4}, rng);
  Tensor z2 = Tensor::randn({16, 4}, rng);
  const double base = barlow_twins_loss(z1, z2, 0.01).item();

  std::vector<double> scaled1(z1.data().begin(), z1.data().end());
  std::vector<double> scaled2(z2.data().begin(), z2.data().end());
  const double scale1[4] = {2.0, 0.5, 7.0, 1.3}, shift1[4] = {1.0, -2.0, 0.3, 0.0};
  const double scale2[4] = {0.25, 3.0, 1.0, 5.0}, shift2[4] = {0.0, 4.0, -1.0, 2.0};
  for (int64_t i = 0; i < 16; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      scaled1[static_cast<size_t>(i * 4 + j)] =
          scale1[j] * scaled1[static_cast<size_t>(i * 4 + j)] + shift1[j];
      scaled2[static_cast<size_t>(i * 4 + j)] =
          scale2[j] * scaled2[static_cast<size_t>(i * 4 + j)] + shift2[j];
    }
  const double rescaled =
      barlow_twins_loss(Tensor::from_data({16, 4}, scaled1), Tensor::from_data({16, 4}, scaled2),
                        0.01)
          .item();
  CHECK(std::abs(base - rescaled) <= 1e-8);
}

TEST_CASE("barlow twins rejects batch below 2") {
  Tensor z = Tensor::zeros({1, 3});
  CHECK_THROWS_AS(barlow_twins_loss(z, z, 0.005), ContractError);
}

TEST_CASE("convnet feature dim is a pure shape function") {
  Rng rng(58);
  ConvNetExtractor net({.in_channels = 1, .image_hw = 16, .depth = 3, .width = 8}, rng);
  CHECK(net.feature_dim() == 8 * 2 * 2);
  Tensor x = Tensor::randn({3, 1, 16, 16}, rng);
  CHECK(net.forward(x).shape() == Shape{3, 32});

  CHECK(default_convnet_depth(32) == 3);
  CHECK(default_convnet_depth(64) == 4);
  CHECK(default_convnet_depth(16) == 3);
}

TEST_CASE("convnet batch permutation equivariance") {
  Rng rng(59);
  ConvNetExtractor net({.in_channels = 1, .image_hw = 8, .depth = 2, .width = 4}, rng);
  Tensor x = Tensor::randn({5, 1, 8, 8}, rng);
  Tensor feats = net.forward(x);
  std::vector<int64_t> perm = {3, 0, 4, 1, 2};
  Tensor feats_perm = net.forward(take_rows(x, perm));
  const int64_t d = feats.dim(1);
  for (int64_t r = 0; r < 5; ++r)
    for (int64_t j = 0; j < d; ++j)
      CHECK(feats_perm.data()[r * d + j] ==
            doctest::Approx(feats.data()[perm[static_cast<size_t>(r)] * d + j]).epsilon(1e-10));
}

TEST_CASE("teacher training smoke: loss decreases, shapes and determinism hold") {
  Rng data_rng(60);
  // blob-ish synthetic batch: two modes so there is something to learn
  std::vector<double> imgs(static_cast<size_t>(64 * 16 * 16));
  for (int64_t i = 0; i < 64; ++i)
    for (int64_t p = 0; p < 256; ++p) {
      const double base = (i % 2 == 0) ? (p % 16) / 16.0 : (p / 16) / 16.0;
      imgs[static_cast<size_t>(i * 256 + p)] = base + 0.05 * data_rng.normal();
    }
  Tensor dataset = Tensor::from_data({64, 1, 16, 16}, imgs);

  TeacherConfig cfg;
  cfg.backbone = {.in_channels = 1, .image_hw = 16, .depth = 3, .width = 8};
  cfg.rep_dim = 16;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.seed = 7;

  TeacherTrainLog log;
  TeacherModel teacher = train_teacher(dataset, cfg, &log);
  REQUIRE(log.epoch_loss.size() == 2);
  CHECK(log.epoch_loss[1] < log.epoch_loss[0]);
  CHECK(teacher.frozen());

  Tensor reps = teacher.representations(dataset);
  CHECK(reps.shape() == Shape{64, 16});

  TeacherModel again = train_teacher(dataset, cfg, nullptr);
  auto pa = teacher.parameters();
  auto pb = again.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    for (int64_t j = 0; j < pa[i].numel(); ++j) CHECK(pa[i].data()[j] == pb[i].data()[j]);
}

TEST_CASE("teacher representations are per-image (chunking does not matter)") {
  Rng rng(61);
  Tensor dataset = Tensor::randn({20, 1, 8, 8}, rng);
  TeacherConfig cfg;
  cfg.backbone = {.in_channels = 1, .image_hw = 8, .depth = 2, .width = 4};
  cfg.rep_dim = 8;
  cfg.epochs = 1;
  cfg.batch_size = 10;
  cfg.seed = 9;
  TeacherModel teacher = train_teacher(dataset, cfg, nullptr);
  Tensor whole = teacher.representations(dataset, 512);
  Tensor pieces = teacher.representations(dataset, 7);
  for (int64_t i = 0; i < whole.numel(); ++i)
    CHECK(whole.data()[i] == doctest::Approx(pieces.data()[i]).epsilon(1e-12));
}
