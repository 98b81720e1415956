#include <benchmark/benchmark.h>

#include "ssdd/rng.hpp"
#include "ssdd/tensor.hpp"

using namespace ssdd;

static void BM_Matmul(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(1);
  Tensor a = Tensor::randn({n, n}, rng);
  Tensor b = Tensor::randn({n, n}, rng);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_ConvForward(benchmark::State& state) {
  const int64_t batch = state.range(0);
  Rng rng(2);
  Tensor x = Tensor::randn({batch, 16, 16, 16}, rng);
  Tensor w = Tensor::randn({16, 16, 3, 3}, rng, 0.1);
  for (auto _ : state) {
    Tensor y = conv2d(x, w, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * batch * 16 * 16 * 16 * 16 * 9 * 2);
}
BENCHMARK(BM_ConvForward)->Arg(64)->Arg(256);

static void BM_ConvBackward(benchmark::State& state) {
  const int64_t batch = state.range(0);
  Rng rng(3);
  Tensor x = Tensor::randn({batch, 16, 16, 16}, rng, 1.0, true);
  Tensor w = Tensor::randn({16, 16, 3, 3}, rng, 0.1, true);
  for (auto _ : state) {
    Tensor loss = sum(conv2d(x, w, 1));
    backward(loss);
    x.zero_grad();
    w.zero_grad();
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_ConvBackward)->Arg(64)->Arg(256);

static void BM_SolveLinear(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(4);
  Tensor g = Tensor::randn({n, n}, rng);
  Tensor a = add(matmul(g, transpose(g)), scale(Tensor::identity(n), 1.0));
  Tensor b = Tensor::randn({n, 32}, rng);
  for (auto _ : state) {
    Tensor x = solve_linear(a, b);
    benchmark::DoNotOptimize(x.data().data());
  }
}
BENCHMARK(BM_SolveLinear)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
