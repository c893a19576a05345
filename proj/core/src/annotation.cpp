#include "apl/annotation.hpp"

#include <algorithm>
#include <charconv>

#include "apl/error.hpp"

namespace apl {

std::string_view name(Category c) noexcept {
  switch (c) {
    case Category::bronchiectasis_airway_thickening: return "bronchiectasis_airway_thickening";
    case Category::mucus_plugging: return "mucus_plugging";
    case Category::consolidation_atelectasis: return "consolidation_atelectasis";
  }
  return "";
}

Rgb display_colour(Category c) noexcept {
  switch (c) {
    case Category::bronchiectasis_airway_thickening: return {255, 0, 0};
    case Category::mucus_plugging: return {255, 255, 0};
    case Category::consolidation_atelectasis: return {0, 0, 255};
  }
  return {0, 0, 0};
}

Category category_from_code(int c) {
  if (c < 1 || c > 3) throw Error(ErrorCode::validation, "category code must be 1, 2 or 3");
  return static_cast<Category>(c);
}

std::optional<Category> category_from_name(std::string_view n) noexcept {
  for (Category c : kCategories) {
    if (name(c) == n) return c;
  }
  return std::nullopt;
}

Palette annotation_palette() {
  Palette p{{0, "unannotated"}};
  for (Category c : kCategories) p.emplace(static_cast<Label>(code(c)), std::string(name(c)));
  return p;
}

std::int64_t SliceAnnotation::count(Category c) const noexcept {
  return std::count(labels.data.begin(), labels.data.end(), static_cast<std::uint8_t>(code(c)));
}

std::int64_t SliceAnnotation::annotated_pixels() const noexcept {
  return static_cast<std::int64_t>(labels.data.size()) -
         std::count(labels.data.begin(), labels.data.end(), std::uint8_t{0});
}

std::int64_t RleMask::pixel_count() const noexcept {
  std::int64_t n = 0;
  for (const Run& r : runs) n += r.length;
  return n;
}

void RleMask::validate() const {
  if (width < 1 || height < 1) throw Error(ErrorCode::malformed_rle, "rle plane dims must be positive");
  const std::int64_t n = width * height;
  std::int64_t end_prev = -1;
  for (const Run& r : runs) {
    if (r.length < 1) throw Error(ErrorCode::malformed_rle, "rle run length must be >= 1");
    if (r.start < 0 || r.start > n - r.length) throw Error(ErrorCode::malformed_rle, "rle run exceeds plane");
    if (r.start <= end_prev) {
      throw Error(ErrorCode::malformed_rle, "rle runs must be sorted, non-overlapping and non-adjacent");
    }
    end_prev = r.start + r.length;
  }
}

RleMask encode_rle_value(const Plane<std::uint8_t>& plane, std::uint8_t value, int category) {
  RleMask m{plane.width, plane.height, category, {}};
  const auto n = static_cast<std::int64_t>(plane.data.size());
  std::int64_t i = 0;
  while (i < n) {
    if (plane.data[static_cast<std::size_t>(i)] != value) {
      ++i;
      continue;
    }
    const std::int64_t start = i;
    while (i < n && plane.data[static_cast<std::size_t>(i)] == value) ++i;
    m.runs.push_back({start, i - start});
  }
  return m;
}

RleMask encode_rle(const Plane<std::uint8_t>& plane, int category) {
  RleMask m{plane.width, plane.height, category, {}};
  const auto n = static_cast<std::int64_t>(plane.data.size());
  std::int64_t i = 0;
  while (i < n) {
    if (!plane.data[static_cast<std::size_t>(i)]) {
      ++i;
      continue;
    }
    const std::int64_t start = i;
    while (i < n && plane.data[static_cast<std::size_t>(i)]) ++i;
    m.runs.push_back({start, i - start});
  }
  return m;
}

Plane<std::uint8_t> decode_rle(const RleMask& mask) {
  mask.validate();
  Plane<std::uint8_t> plane(mask.width, mask.height);
  for (const Run& r : mask.runs) {
    std::fill_n(plane.data.begin() + r.start, r.length, std::uint8_t{1});
  }
  return plane;
}

std::string to_wire(const RleMask& mask) {
  std::string out = std::to_string(mask.width) + "," + std::to_string(mask.height) + "," +
                    std::to_string(mask.category) + ";";
  for (std::size_t i = 0; i < mask.runs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(mask.runs[i].start);
    out += ':';
    out += std::to_string(mask.runs[i].length);
  }
  return out;
}

namespace {

class WireParser {
 public:
  explicit WireParser(std::string_view text) : text_(text) {}

  std::int64_t number() {
    std::int64_t v = 0;
    const auto* first = text_.data() + pos_;
    const auto* last = text_.data() + text_.size();
    if (first == last || *first < '0' || *first > '9') fail("expected a decimal number");
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{}) fail("number out of range");
    pos_ += static_cast<std::size_t>(ptr - first);
    return v;
  }

  void expect(char c) {
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  bool done() const noexcept { return pos_ == text_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::malformed_rle, "rle wire form: " + what + " at offset " + std::to_string(pos_));
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

RleMask parse_wire(std::string_view text) {
  WireParser p(text);
  RleMask m;
  m.width = p.number();
  p.expect(',');
  m.height = p.number();
  p.expect(',');
  m.category = static_cast<int>(p.number());
  p.expect(';');
  while (!p.done()) {
    if (!m.runs.empty()) p.expect(',');
    Run r;
    r.start = p.number();
    p.expect(':');
    r.length = p.number();
    m.runs.push_back(r);
  }
  m.validate();
  return m;
}

LabelPlane merge_category_masks(const std::map<int, RleMask>& per_category, std::int64_t width,
                                std::int64_t height) {
  if (!per_category.empty() && width == 0 && height == 0) {
    width = per_category.begin()->second.width;
    height = per_category.begin()->second.height;
  }
  LabelPlane out(width, height);
  // Lowest code last so that it wins.
  for (auto it = per_category.rbegin(); it != per_category.rend(); ++it) {
    const auto& [c, mask] = *it;
    const Category cat = category_from_code(c);
    if (mask.width != width || mask.height != height) {
      throw Error(ErrorCode::geometry, "category masks disagree on plane dims");
    }
    const auto plane = decode_rle(mask);
    for (std::size_t i = 0; i < plane.data.size(); ++i) {
      if (plane.data[i]) out.data[i] = static_cast<std::uint8_t>(code(cat));
    }
  }
  return out;
}

std::map<int, RleMask> split_categories(const LabelPlane& labels) {
  std::map<int, RleMask> out;
  for (Category c : kCategories) {
    auto m = encode_rle_value(labels, static_cast<std::uint8_t>(code(c)), code(c));
    if (!m.runs.empty()) out.emplace(code(c), std::move(m));
  }
  return out;
}

}  // namespace apl
