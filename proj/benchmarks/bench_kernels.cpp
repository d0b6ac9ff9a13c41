#include <benchmark/benchmark.h>

#include <random>

#include "msml/eigen_sym.hpp"
#include "msml/losses.hpp"
#include "msml/net.hpp"
#include "msml/pca.hpp"

namespace {

msml::Matrix gaussian(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  msml::Matrix m(r, c);
  for (auto& v : m.values()) v = nd(rng);
  return m;
}

void BM_Forward(benchmark::State& state) {
  msml::NetworkSpec spec;
  spec.in_channels = static_cast<std::uint32_t>(state.range(0));
  const auto net = msml::build_network(spec, 1);
  const auto x = gaussian(64, net.input_dim(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(msml::forward(net, x, msml::Mode::Eval).output);
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Forward)->Arg(3)->Arg(13)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto net0 = msml::build_network(msml::NetworkSpec{}, 1);
  auto net = net0;
  const auto x = gaussian(64, net.input_dim(), 3);
  msml::Matrix y(64, 9);
  auto adam = msml::make_adam(net, {});
  std::mt19937_64 rng(4);
  for (auto _ : state) {
    const auto f = msml::forward(net, x, msml::Mode::Train, &rng);
    msml::adam_step(adam, net, msml::backward(net, f.cache, msml::bce_grad(f.output, y)));
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Jacobi(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = gaussian(n, n, 5);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);
  for (auto _ : state) benchmark::DoNotOptimize(msml::eigendecompose_symmetric(a));
}
BENCHMARK(BM_Jacobi)->Arg(13)->Arg(32)->Arg(64);

void BM_CovarianceAccumulate(benchmark::State& state) {
  const auto px = gaussian(static_cast<std::size_t>(state.range(0)), 13, 6);
  for (auto _ : state) {
    msml::CovAccumulator acc(13);
    msml::accumulate(acc, px);
    benchmark::DoNotOptimize(acc.covariance());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CovarianceAccumulate)->Arg(1 << 12)->Arg(1 << 16);

void BM_SoftConGrad(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  msml::SoftConBatch b;
  b.z = gaussian(n, 128, 7);
  b.z_prime = gaussian(n, 128, 8);
  b.labels = msml::Matrix(n, 9);
  for (std::size_t i = 0; i < n; ++i) b.labels(i, i % 9) = 1;
  for (auto _ : state) benchmark::DoNotOptimize(msml::total_loss_grad(b));
}
BENCHMARK(BM_SoftConGrad)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
