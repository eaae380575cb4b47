#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mvqa/ssm.hpp"

namespace {

using namespace mvqa::ssm;

void BM_SelectiveScan(benchmark::State& state) {
  const int L = static_cast<int>(state.range(0));
  const int D = 64, N = 16;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f), pos(0.01f, 0.1f);
  std::vector<float> x(static_cast<std::size_t>(L) * D), delta(x.size()), a(D * N),
      b(static_cast<std::size_t>(L) * N), c(b.size()), d(D), y(x.size());
  for (auto& v : x) v = u(rng);
  for (auto& v : delta) v = pos(rng);
  for (int i = 0; i < D * N; ++i) a[i] = -static_cast<float>(1 + i % N);
  for (auto& v : b) v = u(rng);
  for (auto& v : c) v = u(rng);
  for (auto& v : d) v = u(rng);
  const SelectiveInputs<float> in{x, delta, a, b, c, d, L, D, N};
  for (auto _ : state) {
    selective_scan_kernel<float>(in, Direction::kForward, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * L);
}
BENCHMARK(BM_SelectiveScan)->RangeMultiplier(2)->Range(1024, 8192);

void BM_RecurrentVsKernel(benchmark::State& state) {
  const int L = static_cast<int>(state.range(0));
  const bool kernel = state.range(1) != 0;
  const int N = 8;
  SsmParams<double> p;
  for (int n = 0; n < N; ++n) {
    p.a.push_back(-0.5 - n);
    p.b.push_back(1.0 / (n + 1));
  }
  p.delta = 0.05;
  const auto sys = discretize_zoh<double>(p);
  std::vector<double> c(N, 0.3), x(L);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : x) v = n(rng);
  for (auto _ : state) {
    if (kernel) {
      const auto k = build_kernel<double>(sys, c, L);
      benchmark::DoNotOptimize(apply_kernel<double>(k, 0.1, x));
    } else {
      benchmark::DoNotOptimize(scan_recurrent<double>(sys, c, 0.1, x));
    }
  }
}
BENCHMARK(BM_RecurrentVsKernel)->ArgsProduct({{64, 256, 1024}, {0, 1}});

}  // namespace
