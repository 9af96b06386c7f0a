#include <benchmark/benchmark.h>

#include <vector>

#include "scoregrad/autodiff.hpp"
#include "scoregrad/feature.hpp"
#include "scoregrad/metrics.hpp"
#include "scoregrad/sampling.hpp"
#include "scoregrad/score_network.hpp"

using namespace scoregrad;

namespace {

ScoreNetwork make_network(std::size_t dims, std::size_t features) {
  ScoreNetworkConfig c;
  c.target_dim = dims;
  c.feature_width = features;
  RngStream init(1);
  ScoreNetwork net(c, SdeSpec::vp(), init);
  for (Parameter* p : net.parameters()) {
    for (double& v : p->value().data()) v = 0.1 * init.normal();
  }
  return net;
}

// Dilated residual-block convolution: (B, C, D) input, 2C output channels.
void BM_Conv1d(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const auto D = static_cast<std::size_t>(state.range(1));
  const std::size_t C = 8;
  RngStream rng(2);
  const Tensor input = rng.normal({B, C, D});
  const Tensor kernel = rng.normal({2 * C, C, 3});
  for (auto _ : state) {
    Tape tape(GradMode::kInference);
    Var out = ops::conv1d(tape.constant(input), tape.constant(kernel), std::nullopt, 2);
    benchmark::DoNotOptimize(out.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(B));
}
BENCHMARK(BM_Conv1d)->Args({64, 8})->Args({64, 137})->Args({256, 8});

void BM_ScoreForward(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const auto D = static_cast<std::size_t>(state.range(1));
  const ScoreNetwork net = make_network(D, 40);
  RngStream rng(3);
  const Tensor x = rng.normal({B, D}), f = rng.normal({B, 40});
  const std::vector<double> t(B, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(net.score(x, f, t).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(B));
}
BENCHMARK(BM_ScoreForward)->Args({64, 8})->Args({64, 137})->Args({1, 8});

void BM_ScoreForwardBackward(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const auto D = static_cast<std::size_t>(state.range(1));
  ScoreNetwork net = make_network(D, 40);
  RngStream rng(4);
  const Tensor x = rng.normal({B, D}), f = rng.normal({B, 40});
  const std::vector<double> t(B, 0.5);
  auto params = net.parameters();
  for (auto _ : state) {
    for (Parameter* p : params) p->zero_grad();
    Tape tape;
    Var loss = ops::square_norm(net.forward(tape, tape.constant(x), tape.constant(f), t));
    tape.backward(loss);
    benchmark::DoNotOptimize(params.front()->grad().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(B));
}
BENCHMARK(BM_ScoreForwardBackward)->Args({32, 8})->Args({32, 137});

void BM_GruStep(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const std::size_t D = 8, W = 2 + 2 * D;
  RngStream init(5);
  const FeatureExtractor fx(RnnConfig{D + W, 40, 2}, init);
  const FeatureState s0 = fx.init_state(B);
  const Tensor x = init.normal({B, D}), c = init.normal({B, W});
  for (auto _ : state) benchmark::DoNotOptimize(fx.update(s0, x, c).layers.back().data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(B));
}
BENCHMARK(BM_GruStep)->Arg(1)->Arg(64);

// One predictor plus one corrector step with the network score.
void BM_SamplerStep(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const std::size_t D = 8;
  const ScoreNetwork net = make_network(D, 40);
  const PcSampler sampler(SdeSpec::vp(), SamplerConfig{});
  RngStream rng(6);
  const Tensor f = rng.normal({B, 40});
  const ScoreFn score = [&](const Tensor& x, double t) {
    const std::vector<double> times(x.dim(0), t);
    return net.score(x, f, times);
  };
  Tensor x = rng.normal({B, D});
  for (auto _ : state) {
    Tensor y = sampler.predictor_step(x, score, 50, rng);
    benchmark::DoNotOptimize(sampler.corrector_step(y, score, 50, rng).data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(B));
}
BENCHMARK(BM_SamplerStep)->Arg(64);

void BM_CrpsUnivariate(benchmark::State& state) {
  const auto S = static_cast<std::size_t>(state.range(0));
  RngStream rng(7);
  std::vector<double> samples(S);
  for (double& v : samples) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(crps_univariate(samples, 0.3));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CrpsUnivariate)->RangeMultiplier(10)->Range(10, 100000)->Complexity();

void BM_CrpsSum(benchmark::State& state) {
  RngStream rng(8);
  const std::size_t S = 100, H = 24, D = static_cast<std::size_t>(state.range(0));
  const ForecastSamples f{rng.normal({S, H, D}), {}, Frequency::kHourly};
  const Tensor obs = rng.normal({H, D});
  for (auto _ : state) benchmark::DoNotOptimize(crps_sum(f, obs));
}
BENCHMARK(BM_CrpsSum)->Arg(8)->Arg(370);

}  // namespace

BENCHMARK_MAIN();
