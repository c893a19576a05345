#include <benchmark/benchmark.h>

#include "apl/lungmask.hpp"
#include "apl/phantom.hpp"

namespace {

apl::phantom::Phantom default_phantom(double noise) {
  apl::phantom::PhantomSpec spec;
  spec.seed = 3;
  spec.noise_sigma = noise;
  return apl::phantom::generate(spec);
}

void BM_ConnectedComponents(benchmark::State& state) {
  const auto p = default_phantom(0.0);
  const auto& labels = p.lung_truth.volume().labels();
  std::vector<std::uint8_t> mask(labels.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = labels[i] != 0 ? 1 : 0;
  for (auto _ : state) benchmark::DoNotOptimize(apl::connected_components(p.image.geometry(), mask));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(mask.size()));
}
BENCHMARK(BM_ConnectedComponents);

void BM_SplitLeftRight(benchmark::State& state) {
  const auto p = default_phantom(0.0);
  std::vector<apl::Label> bin(p.lung_truth.volume().labels().size());
  for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = p.lung_truth.volume().labels()[i] != 0 ? 1 : 0;
  const apl::LabelVolume vol(p.image.geometry(), bin);
  for (auto _ : state) benchmark::DoNotOptimize(apl::split_left_right(vol));
}
BENCHMARK(BM_SplitLeftRight);

void BM_FallbackSegment(benchmark::State& state) {
  const auto p = default_phantom(static_cast<double>(state.range(0)) / 100.0);
  for (auto _ : state) benchmark::DoNotOptimize(apl::fallback_segment(p.image));
}
BENCHMARK(BM_FallbackSegment)->Arg(0)->Arg(5);

void BM_Dice(benchmark::State& state) {
  const auto p = default_phantom(0.0);
  const auto seg = apl::fallback_segment(p.image);
  for (auto _ : state) benchmark::DoNotOptimize(apl::dice_score(seg.volume(), p.lung_truth.volume()));
}
BENCHMARK(BM_Dice);

}  // namespace
