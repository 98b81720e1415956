#include <benchmark/benchmark.h>

#include "ssdd/dataset.hpp"
#include "ssdd/distill.hpp"
#include "ssdd/eval.hpp"

using namespace ssdd;

namespace {

// Desk-sized fixtures shared across pipeline benchmarks.
struct Fixture {
  LabeledDataset data;
  TeacherModel teacher;
  Tensor reps;
  Fixture() {
    DigitsConfig dc;
    dc.train_size = 512;
    dc.test_size = 128;
    dc.seed = 3;
    data = make_digits(dc);
    TeacherConfig tc;
    tc.backbone = {.in_channels = 1, .image_hw = 16, .depth = 3, .width = 16};
    tc.rep_dim = 32;
    tc.epochs = 1;
    tc.batch_size = 256;
    tc.seed = 3;
    teacher = train_teacher(data.train_images, tc, nullptr);
    reps = teacher.representations(data.train_images);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

static void BM_TeacherEpoch(benchmark::State& state) {
  auto& f = fixture();
  TeacherConfig tc = f.teacher.config();
  tc.epochs = 1;
  tc.seed = 5;
  for (auto _ : state) {
    TeacherModel t = train_teacher(f.data.train_images, tc, nullptr);
    benchmark::DoNotOptimize(t.frozen());
  }
}
BENCHMARK(BM_TeacherEpoch)->Unit(benchmark::kMillisecond);

static void BM_DistillStep(benchmark::State& state) {
  auto& f = fixture();
  InitConfig icfg;
  icfg.u = 20;
  icfg.v = 20;
  icfg.scale = 2;
  icfg.spec = rotation_spec();
  icfg.seed = 7;
  StorageBudget budget{20, 256};
  Parameterization p = init_from_source(f.data.train_images, f.teacher, icfg, budget);
  auto model = std::make_shared<BasisDistillModel>(std::move(p));
  DistillConfig dcfg;
  dcfg.pool.size = 2;
  dcfg.pool.max_steps = 4;
  dcfg.real_batch = 64;
  dcfg.seed = 7;
  ConvNetConfig inner{.in_channels = 1, .image_hw = 16, .depth = 3, .width = 16};
  ModelPool pool(convnet_pool_factory(inner, 32), dcfg.pool, 7);
  DistillEngine engine(model, f.data.train_images, f.reps, std::move(pool), dcfg);
  engine.pool_init();
  for (auto _ : state) {
    auto stats = engine.step();
    benchmark::DoNotOptimize(stats.outer_loss);
  }
}
BENCHMARK(BM_DistillStep)->Unit(benchmark::kMillisecond);

static void BM_PretrainEpochDistilled(benchmark::State& state) {
  auto& f = fixture();
  InitConfig icfg;
  icfg.u = 20;
  icfg.v = 20;
  icfg.scale = 2;
  icfg.spec = rotation_spec();
  icfg.seed = 9;
  StorageBudget budget{20, 256};
  Parameterization p = init_from_source(f.data.train_images, f.teacher, icfg, budget);
  BasisDistillModel model(std::move(p));
  auto [xs, ys] = model.generate();
  Tensor xs_v = xs.detach(), ys_v = ys.detach();
  ArchConfig arch{.kind = "convnet",
                  .convnet = {.in_channels = 1, .image_hw = 16, .depth = 3, .width = 16},
                  .mlp = {}};
  PretrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 9;
  for (auto _ : state) {
    auto net = pretrain_on_pairs(xs_v, ys_v, arch, cfg);
    benchmark::DoNotOptimize(net->feature_dim());
  }
}
BENCHMARK(BM_PretrainEpochDistilled)->Unit(benchmark::kMillisecond);

static void BM_LinearEval(benchmark::State& state) {
  auto& f = fixture();
  Rng rng(11);
  ConvNetExtractor net({.in_channels = 1, .image_hw = 16, .depth = 3, .width = 16}, rng);
  LinearEvalConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 11;
  for (auto _ : state) {
    const double acc = linear_eval(net, f.data, cfg);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_LinearEval)->Unit(benchmark::kMillisecond);
