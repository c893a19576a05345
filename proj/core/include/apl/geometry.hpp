#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace apl {

using Index3 = std::array<std::int64_t, 3>;
using Vec3 = std::array<double, 3>;
using Matrix4 = std::array<std::array<double, 4>, 4>;

Matrix4 identity_affine() noexcept;
Matrix4 diagonal_affine(const Vec3& spacing) noexcept;

/// Grid size, voxel spacing and voxel-to-physical mapping of a volume.
///
/// Samples are stored x-fastest: index = x + nx * (y + ny * z). Axial planes
/// are taken perpendicular to `axial_axis`; the two remaining axes, in
/// increasing order, become the plane's (u, v) axes with u fastest.
struct VolumeGeometry {
  Index3 dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Matrix4 affine = identity_affine();
  int axial_axis = 2;

  /// Throws Error(geometry) when dims/spacing/affine/axial_axis are invalid.
  void validate() const;

  std::size_t voxel_count() const noexcept;
  double voxel_volume_mm3() const noexcept;

  std::size_t linear_index(const Index3& ijk) const noexcept {
    return static_cast<std::size_t>(ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2]));
  }

  std::array<int, 2> plane_axes() const noexcept;
  std::int64_t axial_count() const noexcept { return dims[axial_axis]; }
  std::int64_t plane_width() const noexcept { return dims[plane_axes()[0]]; }
  std::int64_t plane_height() const noexcept { return dims[plane_axes()[1]]; }

  /// Voxel index of in-plane pixel (u, v) on axial plane z.
  Index3 plane_voxel(std::int64_t z, std::int64_t u, std::int64_t v) const noexcept;

  /// Physical (mm) position of a continuous voxel coordinate.
  Vec3 to_physical(const Vec3& ijk) const noexcept;

  bool same_grid(const VolumeGeometry& other) const noexcept { return dims == other.dims; }
};

}  // namespace apl
