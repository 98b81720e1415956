#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ssdd/augment.hpp"
#include "ssdd/rng.hpp"
#include "support/finite_diff.hpp"

using namespace ssdd;
using testsupport::grad_check;

namespace {

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("rotation group laws are bit-exact") {
  Rng rng(71);
  Tensor x = Tensor::randn({2, 3, 6, 6}, rng);
  Transform r90{TransformKind::Rotate90};
  Transform r180{TransformKind::Rotate180};
  Transform r270{TransformKind::Rotate270};

  Tensor four = apply_transform(
      r90, apply_transform(r90, apply_transform(r90, apply_transform(r90, x))));
  CHECK(bit_equal(four, x));

  Tensor twice180 = apply_transform(r180, apply_transform(r180, x));
  CHECK(bit_equal(twice180, x));

  // 90 then 270 cancels, and 90 twice equals 180
  CHECK(bit_equal(apply_transform(r270, apply_transform(r90, x)), x));
  CHECK(bit_equal(apply_transform(r90, apply_transform(r90, x)), apply_transform(r180, x)));
}

TEST_CASE("rotate180 hand permutation") {
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor y = apply_transform({TransformKind::Rotate180}, x);
  CHECK(y.data()[0] == 4.0);
  CHECK(y.data()[1] == 3.0);
  CHECK(y.data()[2] == 2.0);
  CHECK(y.data()[3] == 1.0);
}

TEST_CASE("jigsaw transforms are involutions") {
  Rng rng(72);
  Tensor x = Tensor::randn({1, 2, 4, 4}, rng);
  for (auto kind : {TransformKind::JigsawLeftRight, TransformKind::JigsawTopBottom,
                    TransformKind::JigsawBoth}) {
    Transform t{kind};
    CHECK(bit_equal(apply_transform(t, apply_transform(t, x)), x));
  }
}

TEST_CASE("permutations preserve the pixel multiset exactly") {
  Rng rng(73);
  Tensor x = Tensor::randn({1, 1, 4, 4}, rng);
  std::vector<double> original(x.data().begin(), x.data().end());
  std::sort(original.begin(), original.end());
  for (auto kind : {TransformKind::Rotate90, TransformKind::Rotate270,
                    TransformKind::JigsawBoth}) {
    Tensor y = apply_transform({kind}, x);
    std::vector<double> permuted(y.data().begin(), y.data().end());
    std::sort(permuted.begin(), permuted.end());
    CHECK(permuted == original);
  }
}

TEST_CASE("transforms commute with scalar multiplication") {
  Rng rng(74);
  Tensor x = Tensor::randn({1, 1, 8, 8}, rng);
  Tensor x3 = scale(x, 3.0);
  for (const auto& t : {Transform{TransformKind::Rotate90},
                        Transform{TransformKind::JigsawLeftRight},
                        Transform{TransformKind::CropCenter, 5},
                        Transform{TransformKind::CropBottomRight, 5}}) {
    Tensor a = scale(apply_transform(t, x), 3.0);
    Tensor b = apply_transform(t, x3);
    for (int64_t i = 0; i < a.numel(); ++i)
      CHECK(std::abs(a.data()[i] - b.data()[i]) <= 1e-12);
  }
}

TEST_CASE("permutation jacobian columns are basis images on 4x4 probes") {
  for (auto kind : {TransformKind::Rotate90, TransformKind::Rotate180,
                    TransformKind::JigsawLeftRight, TransformKind::JigsawTopBottom}) {
    for (int64_t p = 0; p < 16; ++p) {
      std::vector<double> basis(16, 0.0);
      basis[static_cast<size_t>(p)] = 1.0;
      Tensor e = Tensor::from_data({1, 1, 4, 4}, basis);
      Tensor col = apply_transform({kind}, e);
      int ones = 0, zeros = 0;
      for (int64_t i = 0; i < 16; ++i) {
        if (col.data()[i] == 1.0) ++ones;
        else if (col.data()[i] == 0.0) ++zeros;
      }
      CHECK(ones == 1);
      CHECK(zeros == 15);
    }
  }
}

TEST_CASE("crop transforms pass gradient checks") {
  Rng rng(75);
  Tensor x = Tensor::randn({2, 1, 6, 6}, rng, 1.0, true);
  Tensor probe = Tensor::randn({2, 1, 6, 6}, rng);
  for (auto kind : {TransformKind::CropTopLeft, TransformKind::CropCenter}) {
    auto loss = [&] { return sum(mul(apply_transform({kind, 4}, x), probe)); };
    CHECK(grad_check(loss, {x}).max_rel_err <= 1e-5);
  }
}

TEST_CASE("expand_batch layout and gradients") {
  Rng rng(76);
  Tensor x = Tensor::randn({2, 1, 4, 4}, rng, 1.0, true);
  AugmentationSpec spec = rotation_spec();
  Tensor expanded = expand_batch(x, spec);
  CHECK(expanded.dim(0) == 8);
  for (int64_t i = 0; i < 2 * 16; ++i) CHECK(expanded.data()[i] == x.data()[i]);

  // permutation-only spec: d(sum)/dx = (A+1) everywhere
  Tensor loss = sum(expanded);
  backward(loss);
  for (double g : x.grad()) CHECK(g == doctest::Approx(4.0));

  // crop spec end to end
  Tensor y = Tensor::randn({1, 1, 8, 8}, rng, 1.0, true);
  AugmentationSpec crops = crop_spec(8);
  CHECK(crops.transforms[0].crop_side == 5);
  Tensor probe = Tensor::randn({6, 1, 8, 8}, rng);
  auto crop_loss = [&] { return sum(mul(expand_batch(y, crops), probe)); };
  CHECK(grad_check(crop_loss, {y}).max_rel_err <= 1e-5);
}

TEST_CASE("preconditions name the offending transform") {
  Tensor rect = Tensor::zeros({1, 1, 4, 6});
  CHECK_THROWS_WITH_AS(apply_transform({TransformKind::Rotate90}, rect),
                       doctest::Contains("rotate90"), ContractError);
  Tensor odd = Tensor::zeros({1, 1, 3, 3});
  CHECK_THROWS_WITH_AS(apply_transform({TransformKind::JigsawLeftRight}, odd),
                       doctest::Contains("jigsaw_lr"), ContractError);
  Tensor small = Tensor::zeros({1, 1, 4, 4});
  CHECK_THROWS_WITH_AS(apply_transform({TransformKind::CropCenter, 9}, small),
                       doctest::Contains("crop_center"), ContractError);
}

TEST_CASE("default crop side tracks resolution") {
  CHECK(default_crop_side(32) == 20);
  CHECK(default_crop_side(16) == 10);
}

TEST_CASE("transform names round trip") {
  for (int k = 0; k <= static_cast<int>(TransformKind::CropCenter); ++k) {
    const auto kind = static_cast<TransformKind>(k);
    CHECK(transform_from_name(transform_name(kind)) == kind);
  }
  CHECK_THROWS_AS(transform_from_name("swirl"), ConfigError);
}
