#include "apl/sampling.hpp"

#include <algorithm>
#include <limits>

#include "apl/error.hpp"

namespace apl {

bool SliceSamplePlan::contains(std::int64_t z) const noexcept {
  return std::binary_search(slices.begin(), slices.end(), z);
}

LungExtent lung_extent(const LabelVolume& mask) {
  const VolumeGeometry& g = mask.geometry();
  const auto& labels = mask.labels();
  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = -1;
  const auto nx = static_cast<std::size_t>(g.dims[0]);
  const auto ny = static_cast<std::size_t>(g.dims[1]);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) continue;
    const Index3 ijk{static_cast<std::int64_t>(i % nx), static_cast<std::int64_t>((i / nx) % ny),
                     static_cast<std::int64_t>(i / (nx * ny))};
    const std::int64_t z = ijk[g.axial_axis];
    lo = std::min(lo, z);
    hi = std::max(hi, z);
  }
  if (hi < 0) throw Error(ErrorCode::empty_mask, "lung extent of an empty mask is undefined");
  return {lo, hi};
}

LungExtent lung_extent(const LungMask& mask) { return lung_extent(mask.volume()); }

SliceSamplePlan sample_slices(LungExtent extent, std::int64_t k) {
  if (k < 1) throw Error(ErrorCode::parameter, "slice count k must be >= 1");
  if (extent.z_min < 0 || extent.z_max < extent.z_min) {
    throw Error(ErrorCode::parameter, "extent must satisfy 0 <= z_min <= z_max");
  }
  SliceSamplePlan plan;
  plan.z_min = extent.z_min;
  plan.z_max = extent.z_max;
  plan.k_requested = k;
  const std::int64_t e = extent.size();
  if (e < k) {
    plan.short_extent = true;
    for (std::int64_t z = extent.z_min; z <= extent.z_max; ++z) plan.slices.push_back(z);
    return plan;
  }
  plan.slices.reserve(static_cast<std::size_t>(k));
  // floor((i + 0.5) * E / k) evaluated exactly in integers.
  for (std::int64_t i = 0; i < k; ++i) plan.slices.push_back(extent.z_min + ((2 * i + 1) * e) / (2 * k));
  return plan;
}

std::string format_slice_list(const std::vector<std::int64_t>& slices) {
  std::string out;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(slices[i]);
  }
  return out;
}

}  // namespace apl
