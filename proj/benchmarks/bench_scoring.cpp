#include <benchmark/benchmark.h>

#include "apl/phantom.hpp"
#include "apl/sampling.hpp"
#include "apl/scoring.hpp"

namespace {

struct Case {
  apl::phantom::Phantom p;
  apl::SliceSamplePlan plan;
  std::vector<apl::SliceAnnotation> anns;
};

const Case& scoring_case() {
  static const Case c = [] {
    auto spec = apl::phantom::cohort_spec(13, 14, 2024);
    Case out{apl::phantom::generate(spec), {}, {}};
    out.plan = apl::sample_slices(apl::lung_extent(out.p.lung_truth));
    out.anns = apl::annotations_from_volume(out.p.annotation_truth, out.plan);
    return out;
  }();
  return c;
}

void BM_PixelScore(benchmark::State& state) {
  const Case& c = scoring_case();
  for (auto _ : state) benchmark::DoNotOptimize(apl::pixel_score(c.p.lung_truth, c.anns, c.plan));
}
BENCHMARK(BM_PixelScore);

void BM_GridScore(benchmark::State& state) {
  const Case& c = scoring_case();
  const apl::GridParams params{state.range(0), apl::kDefaultLungCellThreshold};
  for (auto _ : state) benchmark::DoNotOptimize(apl::grid_score(c.p.lung_truth, c.anns, c.plan, params));
}
BENCHMARK(BM_GridScore)->Arg(1)->Arg(2)->Arg(8);

void BM_SampleSlices(benchmark::State& state) {
  const apl::LungExtent ext{0, state.range(0) - 1};
  for (auto _ : state) benchmark::DoNotOptimize(apl::sample_slices(ext));
}
BENCHMARK(BM_SampleSlices)->Arg(100)->Arg(512);

void BM_GeneratePhantom(benchmark::State& state) {
  const auto spec = apl::phantom::random_spec(5);
  for (auto _ : state) benchmark::DoNotOptimize(apl::phantom::generate(spec));
}
BENCHMARK(BM_GeneratePhantom);

}  // namespace
