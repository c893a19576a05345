#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "apl/geometry.hpp"
#include "apl/volume.hpp"

namespace apl::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("apl-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline VolumeGeometry grid(std::int64_t nx, std::int64_t ny, std::int64_t nz, Vec3 spacing = {1.0, 1.0, 1.0}) {
  VolumeGeometry g;
  g.dims = {nx, ny, nz};
  g.spacing = spacing;
  g.affine = diagonal_affine(spacing);
  return g;
}

inline LabelVolume labels_from(const VolumeGeometry& g, std::vector<Label> values) {
  return LabelVolume(g, std::move(values));
}

/// Minimal little-endian NIfTI-1 header builder for reader tests.
struct RawHeader {
  std::vector<std::uint8_t> bytes = std::vector<std::uint8_t>(352, 0);

  RawHeader() {
    put<std::int32_t>(0, 348);
    std::memcpy(bytes.data() + 344, "n+1\0", 4);
    put<float>(108, 352.0F);
  }

  template <typename T>
  void put(std::size_t offset, T value) {
    std::memcpy(bytes.data() + offset, &value, sizeof(T));
  }

  void dims(std::int16_t nx, std::int16_t ny, std::int16_t nz) {
    put<std::int16_t>(40, 3);
    put<std::int16_t>(42, nx);
    put<std::int16_t>(44, ny);
    put<std::int16_t>(46, nz);
    for (int i = 4; i < 8; ++i) put<std::int16_t>(40 + 2 * i, 1);
  }
  void datatype(std::int16_t code, std::int16_t bitpix) {
    put<std::int16_t>(70, code);
    put<std::int16_t>(72, bitpix);
  }
  void pixdim(float x, float y, float z) {
    put<float>(76, 1.0F);
    put<float>(80, x);
    put<float>(84, y);
    put<float>(88, z);
  }
  void sform(const std::array<std::array<float, 4>, 3>& rows) {
    put<std::int16_t>(254, 1);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) put<float>(280 + 16 * r + 4 * c, rows[r][c]);
    }
  }
  template <typename T>
  void payload(const std::vector<T>& values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes.insert(bytes.end(), p, p + values.size() * sizeof(T));
  }
};

}  // namespace apl::test
