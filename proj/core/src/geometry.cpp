#include "apl/geometry.hpp"

#include <cmath>
#include <string>

#include "apl/error.hpp"

namespace apl {

Matrix4 identity_affine() noexcept { return diagonal_affine({1.0, 1.0, 1.0}); }

Matrix4 diagonal_affine(const Vec3& spacing) noexcept {
  Matrix4 m{};
  for (int i = 0; i < 3; ++i) m[i][i] = spacing[i];
  m[3][3] = 1.0;
  return m;
}

void VolumeGeometry::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (dims[i] < 1) {
      throw Error(ErrorCode::geometry, "dimension " + std::to_string(i) + " must be >= 1");
    }
    if (!(spacing[i] > 0.0) || !std::isfinite(spacing[i])) {
      throw Error(ErrorCode::geometry, "spacing " + std::to_string(i) + " must be positive");
    }
  }
  if (affine[3][0] != 0.0 || affine[3][1] != 0.0 || affine[3][2] != 0.0 || affine[3][3] != 1.0) {
    throw Error(ErrorCode::geometry, "affine last row must be (0,0,0,1)");
  }
  for (const auto& row : affine) {
    for (double v : row) {
      if (!std::isfinite(v)) throw Error(ErrorCode::geometry, "affine has non-finite entries");
    }
  }
  if (axial_axis < 0 || axial_axis > 2) {
    throw Error(ErrorCode::geometry, "axial_axis must be 0, 1 or 2");
  }
}

std::size_t VolumeGeometry::voxel_count() const noexcept {
  return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
         static_cast<std::size_t>(dims[2]);
}

double VolumeGeometry::voxel_volume_mm3() const noexcept {
  return spacing[0] * spacing[1] * spacing[2];
}

std::array<int, 2> VolumeGeometry::plane_axes() const noexcept {
  switch (axial_axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

Index3 VolumeGeometry::plane_voxel(std::int64_t z, std::int64_t u, std::int64_t v) const noexcept {
  const auto [ua, va] = plane_axes();
  Index3 ijk{};
  ijk[axial_axis] = z;
  ijk[ua] = u;
  ijk[va] = v;
  return ijk;
}

Vec3 VolumeGeometry::to_physical(const Vec3& ijk) const noexcept {
  Vec3 out{};
  for (int r = 0; r < 3; ++r) {
    out[r] = affine[r][0] * ijk[0] + affine[r][1] * ijk[1] + affine[r][2] * ijk[2] + affine[r][3];
  }
  return out;
}

}  // namespace apl
