#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ssdd/artifact.hpp"
#include "ssdd/rng.hpp"

using namespace ssdd;

namespace {

DistilledArtifact random_artifact(uint64_t seed, bool with_nets = true) {
  Rng rng(seed);
  DistilledArtifact a;
  a.geom = {1, 8, 8};
  a.scale = 2;
  a.d_y = 6;
  a.budget_images = 12;
  a.image_basis = Tensor::randn({5, 16}, rng);
  a.image_mean = Tensor::randn({16}, rng);
  a.image_coeffs = Tensor::randn({7, 5}, rng);
  a.rep_basis = Tensor::randn({4, 6}, rng);
  a.rep_mean = Tensor::randn({6}, rng);
  a.rep_coeffs = Tensor::randn({7, 4}, rng);
  a.spec = rotation_spec();
  a.approx_hidden = 3;
  if (with_nets)
    for (int t = 0; t < 3; ++t) a.approx_nets.emplace_back(4, 3, 4, rng);
  a.extra_metadata.emplace_back("seed", "42");
  return a;
}

}  // namespace

TEST_CASE("container round trip is byte-identical") {
  DistilledArtifact a = random_artifact(1);
  Container c = to_container(a);
  const auto bytes = c.serialize();
  Container back = Container::deserialize(bytes);
  const auto bytes2 = back.serialize();
  REQUIRE(bytes.size() == bytes2.size());
  CHECK(bytes == bytes2);

  DistilledArtifact restored = artifact_from_container(back);
  CHECK(restored.float_count() == a.float_count());
  CHECK(restored.m() == a.m());
  CHECK(restored.spec.count() == 3);
  CHECK(restored.approx_nets.size() == 3);

  // and the artifact itself re-serializes to the same bytes
  const auto bytes3 = to_container(restored).serialize();
  CHECK(bytes == bytes3);
}

TEST_CASE("corrupted payload byte is rejected by the checksum") {
  Container c = to_container(random_artifact(2));
  auto bytes = c.serialize();
  bytes[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(Container::deserialize(bytes), IoError);
}

TEST_CASE("bad magic and truncation are rejected") {
  Container c = to_container(random_artifact(3));
  auto bytes = c.serialize();
  auto tampered = bytes;
  tampered[0] = 'X';
  CHECK_THROWS_WITH_AS(Container::deserialize(tampered), doctest::Contains("magic"), IoError);
  std::vector<uint8_t> shorty(bytes.begin(), bytes.begin() + 10);
  CHECK_THROWS_AS(Container::deserialize(shorty), IoError);
}

TEST_CASE("budget ledger itemization matches an independent recount") {
  DistilledArtifact a = random_artifact(4);
  BudgetLedger ledger = audit_budget(a, a.budget_images, a.geom.d_x());
  int64_t hand = 5 * 16 + 16 + 7 * 5 + 4 * 6 + 6 + 7 * 4 + 3 * (4 * 3 + 3 + 3 * 4 + 4);
  CHECK(ledger.total == hand);
  CHECK(ledger.slack == a.budget_images * a.geom.d_x() - hand);
  CHECK(ledger.total == a.float_count());
  CHECK(ledger.total == container_payload_floats(to_container(a)));

  int64_t itemized = 0;
  for (const auto& [name, count] : ledger.items) itemized += count;
  CHECK(itemized == ledger.total);
}

TEST_CASE("empty artifact audits to zero; one float over fails") {
  DistilledArtifact empty;
  empty.geom = {1, 4, 4};
  empty.image_basis = Tensor::zeros({1, 1});  // smallest well-formed payload
  empty.image_mean = Tensor::zeros({1});
  empty.image_coeffs = Tensor::zeros({1, 1});
  empty.rep_basis = Tensor::zeros({1, 1});
  empty.rep_mean = Tensor::zeros({1});
  empty.rep_coeffs = Tensor::zeros({1, 1});
  BudgetLedger tight = audit_budget(empty, 1, 6);
  CHECK(tight.total == 6);
  CHECK(tight.slack == 0);
  enforce_budget(tight);

  BudgetLedger over = audit_budget(empty, 1, 5);
  CHECK(over.slack == -1);
  CHECK_THROWS_AS(enforce_budget(over), ConfigError);
}

TEST_CASE("file io round trip and artifact without nets") {
  const auto path = std::filesystem::temp_directory_path() / "ssdd_artifact_test.bin";
  DistilledArtifact a = random_artifact(5, /*with_nets=*/false);
  write_container(path, to_container(a));
  DistilledArtifact back = artifact_from_container(read_container(path));
  CHECK(back.approx_nets.empty());
  CHECK(back.spec.count() == 3);
  CHECK(back.float_count() == a.float_count());
  std::filesystem::remove(path);
}

TEST_CASE("model checkpoints round trip through the container") {
  Rng rng(6);
  ConvNetExtractor net({.in_channels = 1, .image_hw = 8, .depth = 2, .width = 4}, rng);
  auto restored = convnet_from_container(Container::deserialize(
      convnet_to_container(net).serialize()));
  auto pa = net.parameters();
  auto pb = restored->parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    for (int64_t j = 0; j < pa[i].numel(); ++j)
      CHECK(pb[i].data()[j] == static_cast<double>(static_cast<float>(pa[i].data()[j])));

  Tensor x = Tensor::randn({3, 1, 8, 8}, rng);
  Tensor f1 = net.forward(x);
  Tensor f2 = restored->forward(x);
  for (int64_t i = 0; i < f1.numel(); ++i)
    CHECK(f2.data()[i] == doctest::Approx(f1.data()[i]).epsilon(1e-5));
}

TEST_CASE("teacher checkpoint keeps frozen statistics") {
  Rng rng(7);
  Tensor data = Tensor::randn({12, 1, 8, 8}, rng);
  TeacherConfig cfg;
  cfg.backbone = {.in_channels = 1, .image_hw = 8, .depth = 2, .width = 4};
  cfg.rep_dim = 8;
  cfg.epochs = 1;
  cfg.batch_size = 6;
  cfg.seed = 3;
  TeacherModel teacher = train_teacher(data, cfg, nullptr);
  TeacherModel back = teacher_from_container(Container::deserialize(
      teacher_to_container(teacher).serialize()));
  CHECK(back.frozen());
  Tensor r1 = teacher.representations(data);
  Tensor r2 = back.representations(data);
  for (int64_t i = 0; i < r1.numel(); ++i)
    CHECK(r2.data()[i] == doctest::Approx(r1.data()[i]).epsilon(1e-5));
}
