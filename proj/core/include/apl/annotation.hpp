#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "apl/volume.hpp"

namespace apl {

/// Disease categories. Lower code = higher precedence when pixels overlap.
enum class Category : std::uint8_t {
  bronchiectasis_airway_thickening = 1,
  mucus_plugging = 2,
  consolidation_atelectasis = 3,
};

inline constexpr std::array<Category, 3> kCategories{
    Category::bronchiectasis_airway_thickening,
    Category::mucus_plugging,
    Category::consolidation_atelectasis,
};

struct Rgb {
  std::uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

constexpr int code(Category c) noexcept { return static_cast<int>(c); }
std::string_view name(Category c) noexcept;
Rgb display_colour(Category c) noexcept;
/// Throws Error(validation) for codes other than 1, 2, 3.
Category category_from_code(int code);
std::optional<Category> category_from_name(std::string_view name) noexcept;
Palette annotation_palette();

using LabelPlane = Plane<std::uint8_t>;

struct Timestamps {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  bool operator==(const Timestamps&) const = default;
};

struct SliceAnnotation {
  std::int64_t z = 0;
  /// 0 = unannotated, otherwise a category code.
  LabelPlane labels;
  std::optional<Timestamps> annotated_at;

  std::int64_t count(Category c) const noexcept;
  std::int64_t annotated_pixels() const noexcept;
};

struct Run {
  std::int64_t start = 0;
  std::int64_t length = 0;
  bool operator==(const Run&) const = default;
};

/// Maximal runs of set pixels over the flattened u-fastest index space.
struct RleMask {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int category = 0;
  std::vector<Run> runs;

  std::int64_t pixel_count() const noexcept;
  /// Throws Error(malformed_rle) unless runs are sorted, maximal and in range.
  void validate() const;
  bool operator==(const RleMask&) const = default;
};

RleMask encode_rle(const Plane<std::uint8_t>& plane, int category = 0);
/// Set pixels of `plane` are those equal to `value`.
RleMask encode_rle_value(const Plane<std::uint8_t>& plane, std::uint8_t value, int category);
Plane<std::uint8_t> decode_rle(const RleMask& mask);

/// Wire form "width,height,category;start:len,start:len".
std::string to_wire(const RleMask& mask);
RleMask parse_wire(std::string_view text);

/// Resolves overlaps by precedence 1 > 2 > 3. An empty map yields a 0×0 plane
/// unless `width`/`height` are given.
LabelPlane merge_category_masks(const std::map<int, RleMask>& per_category,
                                std::int64_t width = 0, std::int64_t height = 0);

/// Inverse of merge: one canonical RleMask per category present.
std::map<int, RleMask> split_categories(const LabelPlane& labels);

}  // namespace apl
