// Microbenchmarks for the hot paths: convolution kernels (forward and
// backward), the attention block, a full model step, and SSIM.

#include <benchmark/benchmark.h>

#include <optional>
#include <vector>

#include "mstn/metrics.hpp"
#include "mstn/trainer.hpp"

using namespace mstn;

namespace {

Tensor<float> rand_f(const Shape& s, Rng& rng) {
  std::vector<float> v(s.numel());
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor<float>::from_data(s, std::move(v));
}

void BM_Conv2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Rng rng(1);
  auto x = rand_f({1, c, 64, 64}, rng);
  auto w = rand_f({c, c, 3, 3}, rng);
  auto b = rand_f({c, 1, 1, 1}, rng);
  std::optional<Tensor<float>> ob = b;
  NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, ob, 1, 1).data().data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t(64) * 64 * c * c * 9);
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

void BM_Conv2dTrainStep(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Rng rng(2);
  auto x = rand_f({1, c, 32, 32}, rng);
  auto w = rand_f({c, c, 3, 3}, rng);
  auto b = rand_f({c, 1, 1, 1}, rng);
  std::optional<Tensor<float>> ob = b;
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    sum(conv2d(x, w, ob, 1, 1)).backward();
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_Conv2dTrainStep)->Arg(8)->Arg(16);

void BM_ConvTranspose2d(benchmark::State& state) {
  Rng rng(3);
  auto x = rand_f({1, 16, 32, 32}, rng);
  auto w = rand_f({16, 8, 4, 4}, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        conv_transpose2d(x, w, std::nullopt, 2, 1).data().data());
  }
}
BENCHMARK(BM_ConvTranspose2d);

void BM_Afsm(benchmark::State& state) {
  ParamRegistry<float> reg;
  Rng rng(4);
  Afsm<float> afsm(reg, "a", 32, rng);
  auto x1 = rand_f({1, 32, 32, 32}, rng);
  auto x2 = rand_f({1, 32, 32, 32}, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(afsm.forward(x1, x2).data().data());
  }
}
BENCHMARK(BM_Afsm);

void BM_ModelForward(benchmark::State& state) {
  MstnConfig cfg;
  cfg.rows = cfg.scales = static_cast<int>(state.range(0));
  cfg.base_channels = 8;
  MstnModel<float> model(cfg, 1);
  Rng rng(5);
  const int m = model.required_multiple();
  auto x = rand_f({1, 3, 4 * m, 4 * m}, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(x).data().data());
  }
}
BENCHMARK(BM_ModelForward)->Arg(2)->Arg(3)->Arg(5);

void BM_TrainStep(benchmark::State& state) {
  MstnConfig cfg;
  cfg.rows = cfg.scales = 3;
  cfg.base_channels = 8;
  MstnModel<float> model(cfg, 1);
  Adam adam(model.params());
  Rng rng(6);
  auto hazy = rand_f({8, 3, 32, 32}, rng);
  auto clear = rand_f({8, 3, 32, 32}, rng);
  for (auto _ : state) {
    train_step(model, hazy, clear, adam, 1e-4);
  }
}
BENCHMARK(BM_TrainStep);

void BM_Ssim(benchmark::State& state) {
  Rng rng(7);
  auto x = rand_f({1, 3, 256, 256}, rng);
  auto y = rand_f({1, 3, 256, 256}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ssim(x, y));
  }
}
BENCHMARK(BM_Ssim);

}  // namespace

BENCHMARK_MAIN();
