#include <benchmark/benchmark.h>

#include <random>

#include "apl/annotation.hpp"

namespace {

apl::Plane<std::uint8_t> disc_plane(std::int64_t edge) {
  apl::Plane<std::uint8_t> p(edge, edge);
  const double c = edge / 2.0;
  const double r = edge / 3.0;
  for (std::int64_t y = 0; y < edge; ++y) {
    for (std::int64_t x = 0; x < edge; ++x) {
      if ((x - c) * (x - c) + (y - c) * (y - c) <= r * r) p.at(x, y) = 1;
    }
  }
  return p;
}

apl::Plane<std::uint8_t> noise_plane(std::int64_t edge, unsigned density) {
  std::mt19937 rng(7);
  apl::Plane<std::uint8_t> p(edge, edge);
  for (auto& v : p.data) v = rng() % 100 < density ? 1 : 0;
  return p;
}

void BM_EncodeDisc(benchmark::State& state) {
  const auto plane = disc_plane(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(apl::encode_rle(plane));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(plane.data.size()));
}
BENCHMARK(BM_EncodeDisc)->Arg(128)->Arg(544);

void BM_EncodeNoise(benchmark::State& state) {
  const auto plane = noise_plane(544, static_cast<unsigned>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(apl::encode_rle(plane));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(plane.data.size()));
}
BENCHMARK(BM_EncodeNoise)->Arg(5)->Arg(50);

void BM_Decode(benchmark::State& state) {
  const auto mask = apl::encode_rle(noise_plane(544, static_cast<unsigned>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(apl::decode_rle(mask));
}
BENCHMARK(BM_Decode)->Arg(5)->Arg(50);

void BM_WireRoundTrip(benchmark::State& state) {
  const auto mask = apl::encode_rle(noise_plane(544, 20));
  for (auto _ : state) benchmark::DoNotOptimize(apl::parse_wire(apl::to_wire(mask)));
}
BENCHMARK(BM_WireRoundTrip);

void BM_MergeCategories(benchmark::State& state) {
  std::map<int, apl::RleMask> masks;
  for (int c = 1; c <= 3; ++c) masks.emplace(c, apl::encode_rle(noise_plane(544, 10 * c), c));
  for (auto _ : state) benchmark::DoNotOptimize(apl::merge_category_masks(masks));
}
BENCHMARK(BM_MergeCategories);

}  // namespace
