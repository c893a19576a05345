#include "apl/volume.hpp"

#include <algorithm>
#include <string>

#include "apl/error.hpp"

namespace apl {

namespace {

void check_length(const VolumeGeometry& g, std::size_t n) {
  g.validate();
  if (n != g.voxel_count()) {
    throw Error(ErrorCode::geometry, "sample count " + std::to_string(n) +
                                         " does not match dims product " +
                                         std::to_string(g.voxel_count()));
  }
}

template <typename T, typename Volume>
Plane<T> copy_plane(const VolumeGeometry& g, const std::vector<T>& values, std::int64_t z) {
  if (z < 0 || z >= g.axial_count()) {
    throw Error(ErrorCode::bounds, "axial index " + std::to_string(z) + " outside [0, " +
                                       std::to_string(g.axial_count()) + ")");
  }
  Plane<T> out(g.plane_width(), g.plane_height());
  if (g.axial_axis == 2) {
    const auto plane = static_cast<std::size_t>(out.width * out.height);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(z)),
                plane, out.data.begin());
    return out;
  }
  for (std::int64_t v = 0; v < out.height; ++v) {
    for (std::int64_t u = 0; u < out.width; ++u) {
      out.at(u, v) = values[g.linear_index(g.plane_voxel(z, u, v))];
    }
  }
  return out;
}

}  // namespace

ImageVolume::ImageVolume(VolumeGeometry geometry, std::vector<float> samples)
    : geometry_(geometry), samples_(std::move(samples)) {
  check_length(geometry_, samples_.size());
  const auto [lo, hi] = std::minmax_element(samples_.begin(), samples_.end());
  range_ = {*lo, *hi};
}

Plane<float> ImageVolume::axial_slice(std::int64_t z) const {
  return copy_plane<float, ImageVolume>(geometry_, samples_, z);
}

Plane<float> extract_axial_slice(const ImageVolume& vol, std::int64_t z) { return vol.axial_slice(z); }

LabelVolume::LabelVolume(VolumeGeometry geometry, std::vector<Label> labels, Palette palette)
    : geometry_(geometry), labels_(std::move(labels)), palette_(std::move(palette)) {
  check_length(geometry_, labels_.size());
  std::vector<bool> seen(65536, false);
  for (Label l : labels_) seen[l] = true;
  for (std::size_t l = 0; l < seen.size(); ++l) {
    if (seen[l] && !palette_.contains(static_cast<Label>(l))) {
      palette_.emplace(static_cast<Label>(l), l == 0 ? "background" : "label_" + std::to_string(l));
    }
  }
}

Label LabelVolume::max_label() const noexcept {
  return labels_.empty() ? Label{0} : *std::max_element(labels_.begin(), labels_.end());
}

Plane<Label> LabelVolume::axial_slice(std::int64_t z) const {
  return copy_plane<Label, LabelVolume>(geometry_, labels_, z);
}

}  // namespace apl
