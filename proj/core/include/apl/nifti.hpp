#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "apl/volume.hpp"

namespace apl::nifti {

/// NIfTI-1 datatype codes accepted by the reader.
enum class DataType : std::int16_t {
  uint8 = 2,
  int16 = 4,
  int32 = 8,
  float32 = 16,
  float64 = 64,
};

inline constexpr std::int16_t kIntentLabel = 1002;

using AnyVolume = std::variant<ImageVolume, LabelVolume>;

struct WriteOptions {
  /// Payload type; defaults to float32 for images and the narrowest integer
  /// type holding the largest label for label volumes.
  std::optional<DataType> datatype;
  /// Gzip the file; defaults to true when the path ends in ".gz".
  std::optional<bool> gzip;
};

/// Parses a .nii or gzip-compressed .nii.gz file. Files whose intent_code is
/// NIFTI_INTENT_LABEL become a LabelVolume, everything else an ImageVolume.
AnyVolume read_volume(const std::filesystem::path& path);
AnyVolume parse_volume(std::span<const std::uint8_t> bytes);

ImageVolume read_image(const std::filesystem::path& path);
/// Accepts any supported datatype whose scaled values are non-negative
/// integers no larger than the Label range.
LabelVolume read_labels(const std::filesystem::path& path);
ImageVolume to_image(AnyVolume vol);
LabelVolume to_labels(AnyVolume vol);

void write_volume(const ImageVolume& vol, const std::filesystem::path& path,
                  const WriteOptions& options = {});
void write_volume(const LabelVolume& vol, const std::filesystem::path& path,
                  const WriteOptions& options = {});

std::vector<std::uint8_t> encode_volume(const ImageVolume& vol, const WriteOptions& options = {});
std::vector<std::uint8_t> encode_volume(const LabelVolume& vol, const WriteOptions& options = {});

/// Voxel-to-physical matrix from NIfTI quaternion parameters (qform method 2).
Matrix4 quaternion_to_affine(double b, double c, double d, const Vec3& offset,
                             const Vec3& spacing, double qfac);

namespace gzip {
bool is_compressed(std::span<const std::uint8_t> bytes) noexcept;
std::vector<std::uint8_t> inflate(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> deflate(std::span<const std::uint8_t> bytes);
}  // namespace gzip

}  // namespace apl::nifti
