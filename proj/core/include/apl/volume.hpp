#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "apl/geometry.hpp"

namespace apl {

/// Dense 2D grid, row-major with the first (u) axis fastest.
template <typename T>
struct Plane {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(std::int64_t w, std::int64_t h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w * h), fill) {}

  T& at(std::int64_t u, std::int64_t v) { return data[static_cast<std::size_t>(u + width * v)]; }
  const T& at(std::int64_t u, std::int64_t v) const {
    return data[static_cast<std::size_t>(u + width * v)];
  }
  std::size_t size() const noexcept { return data.size(); }

  bool operator==(const Plane&) const = default;
};

using Label = std::uint16_t;
using Palette = std::map<Label, std::string>;

class ImageVolume {
 public:
  ImageVolume(VolumeGeometry geometry, std::vector<float> samples);

  const VolumeGeometry& geometry() const noexcept { return geometry_; }
  const std::vector<float>& samples() const noexcept { return samples_; }
  std::pair<float, float> value_range() const noexcept { return range_; }

  float at(const Index3& ijk) const { return samples_[geometry_.linear_index(ijk)]; }

  /// Copy of axial plane z; throws Error(bounds) when z is outside the axial extent.
  Plane<float> axial_slice(std::int64_t z) const;

 private:
  VolumeGeometry geometry_;
  std::vector<float> samples_;
  std::pair<float, float> range_{0.0F, 0.0F};
};

class LabelVolume {
 public:
  /// Labels without a palette entry receive a generated "label_<n>" name.
  LabelVolume(VolumeGeometry geometry, std::vector<Label> labels, Palette palette = {});

  const VolumeGeometry& geometry() const noexcept { return geometry_; }
  const std::vector<Label>& labels() const noexcept { return labels_; }
  const Palette& palette() const noexcept { return palette_; }

  Label at(const Index3& ijk) const { return labels_[geometry_.linear_index(ijk)]; }
  Label max_label() const noexcept;

  Plane<Label> axial_slice(std::int64_t z) const;

 private:
  VolumeGeometry geometry_;
  std::vector<Label> labels_;
  Palette palette_;
};

/// Free-function form of ImageVolume::axial_slice.
Plane<float> extract_axial_slice(const ImageVolume& vol, std::int64_t z);

}  // namespace apl
