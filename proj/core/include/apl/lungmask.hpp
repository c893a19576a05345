#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "apl/volume.hpp"

namespace apl {

inline constexpr Label kBackground = 0;
inline constexpr Label kRightLung = 1;
inline constexpr Label kLeftLung = 2;

enum class MaskSource { external_file, fallback_segmenter, manual };

/// Which physical x direction points to the patient's left.
/// lps: right lung has the smaller x; ras: right lung has the larger x.
enum class SideConvention { lps, ras };

std::string_view to_string(MaskSource source) noexcept;

/// Left/right lung label volume ({0: background, 1: right lung, 2: left lung}).
class LungMask {
 public:
  /// Throws Error(validation) for labels outside {0,1,2} and
  /// Error(empty_mask) when there is no lung voxel.
  LungMask(LabelVolume volume, MaskSource source, std::vector<std::string> warnings = {});

  const LabelVolume& volume() const noexcept { return volume_; }
  const VolumeGeometry& geometry() const noexcept { return volume_.geometry(); }
  MaskSource source() const noexcept { return source_; }
  const std::array<std::int64_t, 3>& voxel_counts() const noexcept { return counts_; }
  std::int64_t lung_voxels() const noexcept { return counts_[1] + counts_[2]; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  bool is_lung(std::size_t linear) const noexcept { return volume_.labels()[linear] != kBackground; }

 private:
  LabelVolume volume_;
  MaskSource source_;
  std::array<std::int64_t, 3> counts_{};
  std::vector<std::string> warnings_;
};

Palette lung_palette();

struct SplitOptions {
  SideConvention convention = SideConvention::lps;
};

/// Labels the two largest 6-connected foreground components as right/left
/// lung by physical centroid x. A single component is kept as label 1 with a
/// warning; remaining components are discarded.
LungMask split_left_right(const LabelVolume& binary_mask, const SplitOptions& options = {},
                          MaskSource source = MaskSource::external_file);

LungMask ingest_mask(const LabelVolume& vol, std::optional<Label> binarize_threshold = std::nullopt,
                     const SplitOptions& options = {},
                     MaskSource source = MaskSource::external_file);

/// Classical intensity-based lung segmentation for hypointense parenchyma.
LungMask fallback_segment(const ImageVolume& img, const SplitOptions& options = {});

/// 6-connected components of a binary voxel set. Component ids start at 1;
/// 0 marks background. `sizes[id - 1]` is the voxel count of component id.
struct Components {
  std::vector<std::int32_t> ids;
  std::vector<std::int64_t> sizes;
};
Components connected_components(const VolumeGeometry& geometry, const std::vector<std::uint8_t>& mask);

/// Otsu threshold over the given samples (256-bin histogram spanning their range).
/// Returns nullopt when the samples are constant or empty.
std::optional<float> otsu_threshold(const std::vector<float>& samples);

/// Selected voxel set for Dice: a single label, or every nonzero label.
struct LabelSelector {
  std::optional<Label> label;
  static LabelSelector foreground() { return {}; }
  static LabelSelector of(Label l) { return {l}; }
  bool matches(Label v) const noexcept { return label ? v == *label : v != 0; }
};

/// 2|A∩B| / (|A|+|B|); 1 when both sets are empty.
double dice_score(const LabelVolume& a, const LabelVolume& b, LabelSelector selector = {});

struct DiceRow {
  std::string case_id;
  std::optional<std::string> error;
  double right = 0.0;
  double left = 0.0;
  double foreground = 0.0;
  /// Mean of the two per-lung scores.
  double mean = 0.0;
};

struct DiceTable {
  std::vector<DiceRow> rows;
  /// Arithmetic means over rows without error.
  double mean_foreground = 0.0;
  double mean_of_means = 0.0;
  std::size_t ok_rows = 0;
};

DiceTable evaluate_masks(const std::vector<std::filesystem::path>& pred_paths,
                         const std::vector<std::filesystem::path>& gt_paths);

/// CSV with header "case_id,label,dice"; `precision` significant digits.
std::string to_csv(const DiceTable& table, int precision = 6);

}  // namespace apl
