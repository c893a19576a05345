#include <benchmark/benchmark.h>

#include <random>

#include "apl/stats.hpp"

namespace {

void BM_IncompleteBeta(benchmark::State& state) {
  const double p = static_cast<double>(state.range(0)) / 2.0;
  double x = 0.0;
  for (auto _ : state) {
    x = x >= 0.99 ? 0.01 : x + 0.01;
    benchmark::DoNotOptimize(apl::stats::regularized_incomplete_beta(x, p, 1.5));
  }
}
BENCHMARK(BM_IncompleteBeta)->Arg(1)->Arg(5)->Arg(40);

void BM_TTail(benchmark::State& state) {
  double t = 0.0;
  for (auto _ : state) {
    t = t > 8.0 ? 0.0 : t + 0.1;
    benchmark::DoNotOptimize(apl::stats::student_t_two_tailed(t, 12.0));
  }
}
BENCHMARK(BM_TTail);

void BM_PairedTests(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> a(static_cast<std::size_t>(state.range(0)));
  std::vector<double> b(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = z(rng);
    b[i] = 0.5 * a[i] + z(rng);
  }
  const apl::stats::PairedSample s(a, b);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::stats::paired_t_test(s));
    benchmark::DoNotOptimize(apl::stats::pearson(s));
  }
}
BENCHMARK(BM_PairedTests)->Arg(14)->Arg(1000);

}  // namespace
