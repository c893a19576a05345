#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "apl/lungmask.hpp"

namespace apl {

inline constexpr std::int64_t kDefaultSliceCount = 10;

struct LungExtent {
  std::int64_t z_min = 0;
  std::int64_t z_max = 0;
  std::int64_t size() const noexcept { return z_max - z_min + 1; }
  bool operator==(const LungExtent&) const = default;
};

struct SliceSamplePlan {
  std::int64_t z_min = 0;
  std::int64_t z_max = 0;
  std::int64_t k_requested = kDefaultSliceCount;
  std::vector<std::int64_t> slices;
  bool short_extent = false;

  std::int64_t extent() const noexcept { return z_max - z_min + 1; }
  bool contains(std::int64_t z) const noexcept;
  bool operator==(const SliceSamplePlan&) const = default;
};

LungExtent lung_extent(const LungMask& mask);
LungExtent lung_extent(const LabelVolume& mask);

/// Centred uniform partition: slices[i] = z_min + floor((i + 0.5) * E / k).
SliceSamplePlan sample_slices(LungExtent extent, std::int64_t k = kDefaultSliceCount);

/// "5,15,25" form.
std::string format_slice_list(const std::vector<std::int64_t>& slices);

}  // namespace apl
