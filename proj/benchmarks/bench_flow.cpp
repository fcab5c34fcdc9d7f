#include <benchmark/benchmark.h>

#include <vector>

#include "eulerflow/dataset.hpp"
#include "eulerflow/flow.hpp"
#include "eulerflow/mobius.hpp"
#include "eulerflow/net.hpp"
#include "eulerflow/rng.hpp"
#include "eulerflow/train.hpp"

namespace {

using namespace eulerflow;

MobiusCombination random_combination(int k, RandomSource& rng) {
  std::vector<double> raw(3 * static_cast<std::size_t>(k));
  for (auto& v : raw) v = normal01(rng);
  return apply_param_constraints(raw, k);
}

void BM_MobiusCombinationForward(benchmark::State& state) {
  RandomSource rng(11);
  const auto c = random_combination(static_cast<int>(state.range(0)), rng);
  double theta = 0.3;
  for (auto _ : state) {
    theta = combination_forward(c, theta) * 0.999 + 1e-4;
    benchmark::DoNotOptimize(theta);
  }
}
BENCHMARK(BM_MobiusCombinationForward)->Arg(16)->Arg(64);

void BM_MobiusCombinationInverse(benchmark::State& state) {
  RandomSource rng(12);
  const auto c = random_combination(static_cast<int>(state.range(0)), rng);
  double theta = 0.3;
  for (auto _ : state) {
    theta = combination_inverse(c, theta, 1e-9) * 0.999 + 1e-4;
    benchmark::DoNotOptimize(theta);
  }
}
BENCHMARK(BM_MobiusCombinationInverse)->Arg(16)->Arg(64);

void BM_NetForward(benchmark::State& state) {
  ConditionerNet net({4, 64, 64, 3 * 64}, 5);
  NetWorkspace ws;
  const std::vector<double> x{0.1, 0.99, -0.4, 0.9};
  for (auto _ : state) {
    net.forward(x, ws);
    benchmark::DoNotOptimize(ws.acts.back().data());
  }
}
BENCHMARK(BM_NetForward);

void BM_LogProb(benchmark::State& state) {
  FlowConfig cfg;
  cfg.layers = static_cast<int>(state.range(0));
  cfg.kernels = 16;
  cfg.seed = 3;
  FlowModel model(cfg);
  RandomSource rng(7);
  const EulerAngles e(1.0, 0.5, 2.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.log_prob(e));
  }
  (void)rng;
}
BENCHMARK(BM_LogProb)->Arg(4)->Arg(24);

void BM_NllGradient(benchmark::State& state) {
  FlowConfig cfg;
  cfg.layers = 4;
  cfg.kernels = 16;
  cfg.seed = 3;
  FlowModel model(cfg);
  RandomSource rng(9);
  std::vector<EulerAngles> batch;
  for (int i = 0; i < 64; ++i)
    batch.emplace_back(uniform_angle(rng), uniform_angle(rng), uniform_angle(rng));
  std::vector<double> grad(model.param_count());
  FlowWorkspace ws;
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0);
    benchmark::DoNotOptimize(nll_loss(model, batch, {}, grad, ws));
  }
}
BENCHMARK(BM_NllGradient);

void BM_TrainIteration(benchmark::State& state) {
  GimbalSpec gs;
  gs.train_n = 4096;
  gs.test_n = 16;
  gs.seed = 21;
  const Dataset ds = generate_gimbal(gs);
  TrainConfig cfg = desk_preset();
  cfg.layers = static_cast<int>(state.range(0));
  const int iters = 20;
  for (auto _ : state) {
    const double ms = bench_ms_per_iteration(cfg, ds, iters);
    state.SetIterationTime(ms * iters / 1000.0);
    benchmark::DoNotOptimize(ms);
  }
}
BENCHMARK(BM_TrainIteration)->Arg(4)->Arg(8)->UseManualTime()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
