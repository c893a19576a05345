#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apl/annotation.hpp"
#include "apl/lungmask.hpp"
#include "apl/sampling.hpp"

namespace apl {

enum class ScoreMode { pixel, grid };
std::string_view to_string(ScoreMode mode) noexcept;

inline constexpr double kDefaultLungCellThreshold = 0.5;

struct GridParams {
  std::int64_t cell_edge = 1;
  double tau = kDefaultLungCellThreshold;
  bool operator==(const GridParams&) const = default;
};

struct ScoreReport {
  ScoreMode mode = ScoreMode::pixel;
  /// Indexed by category code - 1.
  std::array<double, 3> per_category_ratio{};
  std::array<double, 3> per_category_volume_mm3{};
  /// Annotated voxels (pixel mode) or assigned cells (grid mode).
  std::array<std::int64_t, 3> per_category_count{};
  double total_ratio = 0.0;
  double sampled_lung_volume_mm3 = 0.0;
  std::int64_t lung_voxels = 0;
  /// Lung cells in grid mode; equals lung_voxels in pixel mode.
  std::int64_t lung_units = 0;
  std::optional<GridParams> grid_params;
  std::vector<std::int64_t> slices_used;
  bool clip_to_lung = true;

  double ratio(Category c) const noexcept { return per_category_ratio[code(c) - 1]; }
  bool operator==(const ScoreReport&) const = default;
};

struct GridCell {
  std::int64_t u0 = 0;
  std::int64_t v0 = 0;
  std::int64_t z = 0;
  std::int64_t lung_pixel_count = 0;
  std::int64_t total_pixel_count = 0;
  int assigned_category = 0;
  bool is_lung = false;
};

struct GridTessellation {
  std::int64_t cell_edge = 1;
  std::vector<GridCell> cells;
};

ScoreReport pixel_score(const LungMask& mask, const std::vector<SliceAnnotation>& annotations,
                        const SliceSamplePlan& plan, bool clip_to_lung = true);

GridTessellation tessellate(const LungMask& mask, const std::vector<SliceAnnotation>& annotations,
                            const SliceSamplePlan& plan, const GridParams& params);

ScoreReport grid_score(const LungMask& mask, const std::vector<SliceAnnotation>& annotations,
                       const SliceSamplePlan& plan, const GridParams& params);

/// max(1, round(longest in-plane lung bounding-box edge over sampled slices / 20)).
std::int64_t default_cell_edge(const LungMask& mask, const SliceSamplePlan& plan);

struct ScorePair {
  double pixel_total = 0.0;
  double grid_total = 0.0;
  std::array<std::pair<double, double>, 3> per_category{};
  double difference() const noexcept { return pixel_total - grid_total; }
};

ScorePair compare_scores(const ScoreReport& pixel, const ScoreReport& grid);

/// Annotation planes of `ann` on every plan slice (unannotated ones included).
std::vector<SliceAnnotation> annotations_from_volume(const LabelVolume& ann,
                                                     const SliceSamplePlan& plan);

std::string score_csv_header();
std::string to_csv_row(const ScoreReport& report, const std::string& subject_id, int precision = 6);
std::string to_json(const ScoreReport& report);
ScoreReport score_report_from_json(const std::string& text);

/// Locale-independent shortest round-trip (precision <= 0) or %.{precision}g formatting.
std::string format_number(double value, int precision = 6);

}  // namespace apl
