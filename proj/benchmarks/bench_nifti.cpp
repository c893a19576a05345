#include <benchmark/benchmark.h>

#include "apl/nifti.hpp"
#include "apl/phantom.hpp"

namespace {

const apl::phantom::Phantom& sample_phantom() {
  static const apl::phantom::Phantom p = apl::phantom::generate(apl::phantom::random_spec(11));
  return p;
}

void BM_EncodeImage(benchmark::State& state) {
  const auto& img = sample_phantom().image;
  const bool gz = state.range(0) != 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::nifti::encode_volume(img, {.datatype = std::nullopt, .gzip = gz}));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(img.samples().size() * sizeof(float)));
}
BENCHMARK(BM_EncodeImage)->Arg(0)->Arg(1);

void BM_ParseImage(benchmark::State& state) {
  const auto& img = sample_phantom().image;
  const auto bytes = apl::nifti::encode_volume(img, {.datatype = std::nullopt, .gzip = state.range(0) != 0});
  for (auto _ : state) benchmark::DoNotOptimize(apl::nifti::parse_volume(bytes));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(img.samples().size() * sizeof(float)));
}
BENCHMARK(BM_ParseImage)->Arg(0)->Arg(1);

void BM_LabelRoundTrip(benchmark::State& state) {
  const auto& labels = sample_phantom().lung_truth.volume();
  for (auto _ : state) {
    const auto bytes = apl::nifti::encode_volume(labels, {.datatype = std::nullopt, .gzip = true});
    benchmark::DoNotOptimize(apl::nifti::to_labels(apl::nifti::parse_volume(bytes)));
  }
}
BENCHMARK(BM_LabelRoundTrip);

}  // namespace
