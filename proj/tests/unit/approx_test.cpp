#include <doctest.h>

#include <cmath>

#include "ssdd/approx.hpp"
#include "ssdd/rng.hpp"

using namespace ssdd;

namespace {

std::vector<Tensor> shifted_blocks(const Tensor& cy, Rng& rng, int count, double spread) {
  std::vector<Tensor> blocks;
  for (int a = 0; a < count; ++a) {
    std::vector<double> data(cy.data().begin(), cy.data().end());
    for (auto& v : data) v += spread * rng.normal();
    blocks.push_back(Tensor::from_data(cy.shape(), std::move(data)));
  }
  return blocks;
}

}  // namespace

TEST_CASE("zero shifts are learned to numerical zero") {
  Rng rng(301);
  Tensor cy = Tensor::randn({10, 4}, rng);
  std::vector<Tensor> blocks = {cy.detach(), cy.detach()};
  ApproxTrainConfig cfg;
  cfg.hidden = 3;
  cfg.steps = 50;
  ApproxTrainResult r = train_approx(cy, blocks, cfg);
  for (double m : r.final_mse) CHECK(m <= 1e-4);
}

TEST_CASE("constant shift is representable and fitted through the warm start") {
  Rng rng(302);
  Tensor cy = Tensor::randn({12, 3}, rng);
  std::vector<double> shifted(cy.data().begin(), cy.data().end());
  const double beta[3] = {0.7, -1.1, 0.25};
  for (int64_t i = 0; i < 12; ++i)
    for (int64_t j = 0; j < 3; ++j) shifted[static_cast<size_t>(i * 3 + j)] += beta[j];
  std::vector<Tensor> blocks = {Tensor::from_data({12, 3}, shifted)};
  ApproxTrainConfig cfg;
  cfg.hidden = 2;
  cfg.steps = 100;
  ApproxTrainResult r = train_approx(cy, blocks, cfg);
  CHECK(r.final_mse[0] <= 1e-3);
}

TEST_CASE("shift mse ordering: ideal <= nets <= optimal bias <= same") {
  Rng rng(303);
  Tensor cy = Tensor::randn({16, 4}, rng);
  auto blocks = shifted_blocks(cy, rng, 2, 0.5);

  ApproxTrainConfig cfg;
  cfg.hidden = 4;
  cfg.steps = 400;
  ApproxTrainResult trained = train_approx(cy, blocks, cfg);

  const double ideal = shift_mse(ShiftModel::ideal(blocks), cy, blocks).mean;
  const double nets = shift_mse(ShiftModel::approx(trained.nets), cy, blocks).mean;
  const double bias = shift_mse(ShiftModel::bias_optimal(cy, blocks), cy, blocks).mean;
  const double same = shift_mse(ShiftModel::same(2), cy, blocks).mean;
  CHECK(ideal == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(nets <= bias + 1e-12);
  CHECK(bias <= same + 1e-12);
}

TEST_CASE("same-variant mse equals the mean squared block deviation") {
  Rng rng(304);
  Tensor cy = Tensor::randn({8, 3}, rng);
  auto blocks = shifted_blocks(cy, rng, 1, 0.3);
  double hand = 0.0;
  for (int64_t i = 0; i < cy.numel(); ++i) {
    const double d = blocks[0].data()[i] - cy.data()[i];
    hand += d * d;
  }
  hand /= static_cast<double>(cy.numel());
  CHECK(shift_mse(ShiftModel::same(1), cy, blocks).mean == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("optimal bias mse equals the shift variance") {
  Rng rng(305);
  Tensor cy = Tensor::randn({20, 2}, rng);
  auto blocks = shifted_blocks(cy, rng, 1, 0.8);
  // variance of the shift around its column mean, averaged per entry
  const int64_t m = 20, v = 2;
  std::vector<double> mean(2, 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < v; ++j)
      mean[static_cast<size_t>(j)] += (blocks[0].data()[i * v + j] - cy.data()[i * v + j]) / m;
  double var = 0.0;
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < v; ++j) {
      const double d = blocks[0].data()[i * v + j] - cy.data()[i * v + j] - mean[static_cast<size_t>(j)];
      var += d * d;
    }
  var /= static_cast<double>(m * v);
  CHECK(shift_mse(ShiftModel::bias_optimal(cy, blocks), cy, blocks).mean ==
        doctest::Approx(var).epsilon(1e-12));
}

TEST_CASE("predict_targets variants") {
  Rng rng(306);
  const int64_t m = 5, v = 3, d_y = 4;
  Tensor cy = Tensor::randn({m, v}, rng);
  RepBases bases;
  bases.basis = Tensor::randn({v, d_y}, rng);
  bases.mean = Tensor::randn({d_y}, rng);

  // zero nets reduce to the Same variant
  std::vector<Mlp2> zero_nets;
  for (int a = 0; a < 2; ++a) {
    Rng nrng(a + 1);
    Mlp2 net(v, 2, v, nrng);
    auto w2 = net.w2.raw();
    std::fill(w2.begin(), w2.end(), 0.0);
    auto b2 = net.b2.raw();
    std::fill(b2.begin(), b2.end(), 0.0);
    zero_nets.push_back(std::move(net));
  }
  Tensor from_nets = predict_targets(ShiftModel::approx(std::move(zero_nets)), cy, bases);
  Tensor from_same = predict_targets(ShiftModel::same(2), cy, bases);
  REQUIRE(from_nets.shape() == Shape{m * 3, d_y});
  for (int64_t i = 0; i < from_nets.numel(); ++i)
    CHECK(from_nets.data()[i] == doctest::Approx(from_same.data()[i]).epsilon(1e-12));

  // ideal with identical blocks: every block equals the base
  Tensor ideal = predict_targets(ShiftModel::ideal({cy.detach(), cy.detach()}), cy, bases);
  for (int64_t i = 0; i < m * d_y; ++i) {
    CHECK(ideal.data()[i] == doctest::Approx(ideal.data()[m * d_y + i]).epsilon(1e-12));
    CHECK(ideal.data()[i] == doctest::Approx(ideal.data()[2 * m * d_y + i]).epsilon(1e-12));
  }

  // A=0: plain reconstruction, m rows
  CHECK(predict_targets(ShiftModel::same(0), cy, bases).shape() == Shape{m, d_y});

  // Ideal without blocks is a contract violation
  ShiftModel broken = ShiftModel::ideal({});
  broken.num_augmentations = 2;
  CHECK_THROWS_AS(predict_targets(broken, cy, bases), ContractError);
}

TEST_CASE("approximation nets hit the published float budget") {
  Rng rng(307);
  Tensor cy = Tensor::randn({6, 5}, rng);
  auto blocks = shifted_blocks(cy, rng, 3, 0.2);
  ApproxTrainConfig cfg;
  cfg.hidden = 4;
  cfg.steps = 5;
  ApproxTrainResult r = train_approx(cy, blocks, cfg);
  int64_t total = 0;
  for (const auto& net : r.nets)
    total += net.w1.numel() + net.b1.numel() + net.w2.numel() + net.b2.numel();
  CHECK(total == approx_float_count(3, 5, 4));
}
