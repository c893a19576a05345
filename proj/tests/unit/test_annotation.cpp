#include <doctest.h>

#include <random>

#include "apl/annotation.hpp"
#include "apl/error.hpp"

using namespace apl;

namespace {

ErrorCode error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an apl::Error");
  return ErrorCode::validation;
}

Plane<std::uint8_t> random_plane(std::mt19937& rng, std::int64_t w, std::int64_t h, unsigned density) {
  Plane<std::uint8_t> p(w, h);
  for (auto& v : p.data) v = (rng() % 100) < density ? 1 : 0;
  return p;
}

}  // namespace

TEST_CASE("category metadata") {
  CHECK(code(Category::bronchiectasis_airway_thickening) == 1);
  CHECK(code(Category::consolidation_atelectasis) == 3);
  CHECK(display_colour(Category::bronchiectasis_airway_thickening) == Rgb{255, 0, 0});
  CHECK(display_colour(Category::mucus_plugging) == Rgb{255, 255, 0});
  CHECK(display_colour(Category::consolidation_atelectasis) == Rgb{0, 0, 255});
  CHECK(category_from_name("mucus_plugging") == Category::mucus_plugging);
  CHECK_FALSE(category_from_name("emphysema").has_value());
  CHECK(category_from_code(2) == Category::mucus_plugging);
  CHECK(error_of([] { category_from_code(4); }) == ErrorCode::validation);
  CHECK(annotation_palette().size() == 4);
}

TEST_CASE("encode examples") {
  CHECK(encode_rle(Plane<std::uint8_t>(3, 3)).runs.empty());
  CHECK(encode_rle(Plane<std::uint8_t>(3, 3, 1)).runs == std::vector<Run>{{0, 9}});
  Plane<std::uint8_t> p(3, 3);
  p.at(0, 0) = 1;
  p.at(1, 0) = 1;
  p.at(0, 1) = 1;
  const RleMask m = encode_rle(p, 2);
  CHECK(m.runs == std::vector<Run>{{0, 2}, {3, 1}});
  CHECK(m.category == 2);
  CHECK(m.pixel_count() == 3);
}

TEST_CASE("decode examples") {
  const auto plane = decode_rle({3, 3, 1, {{0, 2}, {3, 1}}});
  CHECK(plane.data == std::vector<std::uint8_t>{1, 1, 0, 1, 0, 0, 0, 0, 0});
  CHECK(decode_rle({4, 2, 1, {}}) == Plane<std::uint8_t>(4, 2));
  CHECK(error_of([] { decode_rle({3, 3, 1, {{5, 5}}}); }) == ErrorCode::malformed_rle);
}

TEST_CASE("malformed runs are rejected") {
  CHECK(error_of([] { decode_rle({3, 3, 1, {{0, 3}, {2, 2}}}); }) == ErrorCode::malformed_rle);
  CHECK(error_of([] { decode_rle({3, 3, 1, {{4, 1}, {0, 1}}}); }) == ErrorCode::malformed_rle);
  CHECK(error_of([] { decode_rle({3, 3, 1, {{0, 2}, {2, 1}}}); }) == ErrorCode::malformed_rle);
  CHECK(error_of([] { decode_rle({3, 3, 1, {{1, 0}}}); }) == ErrorCode::malformed_rle);
  CHECK(error_of([] { decode_rle({3, 3, 1, {{-1, 2}}}); }) == ErrorCode::malformed_rle);
  CHECK(error_of([] { decode_rle({0, 3, 1, {}}); }) == ErrorCode::malformed_rle);
}

TEST_CASE("wire form") {
  const RleMask m{544, 2, 3, {{0, 2}, {10, 7}}};
  CHECK(to_wire(m) == "544,2,3;0:2,10:7");
  CHECK(parse_wire("544,2,3;0:2,10:7") == m);
  CHECK(parse_wire(to_wire({4, 4, 1, {}})) == RleMask{4, 4, 1, {}});
  CHECK(parse_wire("3,3,1;").runs.empty());
  for (const char* bad : {"", "3,3", "3,3,1", "3,3,1;0:2,", "3,3,1;0-2", "a,3,1;", "3,3,1;0:2 ",
                          "3,3,1;0:20", "3,3,1;0:1,1:1", "3,3,1;+1:1", "3,3,1;0:1;2:1"}) {
    CAPTURE(std::string(bad));
    CHECK(error_of([bad] { parse_wire(bad); }) == ErrorCode::malformed_rle);
  }
}

TEST_CASE("RLE round trip on random planes") {
  std::mt19937 rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t w = 1 + rng() % 64;
    const std::int64_t h = 1 + rng() % 64;
    const auto plane = random_plane(rng, w, h, rng() % 101);
    const RleMask m = encode_rle(plane);
    m.validate();
    CHECK(decode_rle(m) == plane);
    CHECK(m.pixel_count() == std::count(plane.data.begin(), plane.data.end(), 1));
    CHECK(parse_wire(to_wire(m)) == m);
    CHECK(encode_rle(decode_rle(m)) == m);
  }
}

TEST_CASE("merge precedence") {
  Plane<std::uint8_t> a(3, 1);
  a.at(0, 0) = 1;
  a.at(1, 0) = 1;
  Plane<std::uint8_t> b(3, 1);
  b.at(1, 0) = 1;
  b.at(2, 0) = 1;

  SUBCASE("disjoint categories form a union") {
    Plane<std::uint8_t> c(3, 1);
    c.at(2, 0) = 1;
    const auto merged = merge_category_masks({{1, encode_rle(a, 1)}, {3, encode_rle(c, 3)}});
    CHECK(merged.data == std::vector<std::uint8_t>{1, 1, 3});
  }
  SUBCASE("lower code wins on overlap") {
    CHECK(merge_category_masks({{1, encode_rle(a, 1)}, {2, encode_rle(b, 2)}}).data ==
          std::vector<std::uint8_t>{1, 1, 2});
    CHECK(merge_category_masks({{2, encode_rle(a, 2)}, {3, encode_rle(b, 3)}}).data ==
          std::vector<std::uint8_t>{2, 2, 3});
  }
  SUBCASE("empty map") {
    CHECK(merge_category_masks({}, 4, 2) == LabelPlane(4, 2));
    CHECK(merge_category_masks({}).size() == 0);
  }
  SUBCASE("dims mismatch is a geometry error") {
    CHECK(error_of([&] {
            merge_category_masks({{1, encode_rle(a, 1)}, {2, encode_rle(Plane<std::uint8_t>(2, 2), 2)}});
          }) == ErrorCode::geometry);
    CHECK(error_of([&] { merge_category_masks({{1, encode_rle(a, 1)}}, 4, 1); }) == ErrorCode::geometry);
  }
  SUBCASE("unknown category codes are rejected") {
    CHECK_THROWS_AS(merge_category_masks({{4, encode_rle(a, 4)}}), Error);
  }
}

TEST_CASE("merge is idempotent and independent of insertion order") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t w = 1 + rng() % 20;
    const std::int64_t h = 1 + rng() % 20;
    std::vector<std::pair<int, RleMask>> items;
    for (int c = 1; c <= 3; ++c) items.emplace_back(c, encode_rle(random_plane(rng, w, h, 30), c));
    const auto merged = merge_category_masks({items.begin(), items.end()});
    std::reverse(items.begin(), items.end());
    std::map<int, RleMask> reversed;
    for (auto& kv : items) reversed.insert(kv);
    CHECK(merge_category_masks(reversed) == merged);

    // Re-merging the split of a merged plane reproduces it.
    CHECK(merge_category_masks(split_categories(merged), w, h) == merged);

    // Brute-force precedence oracle.
    for (std::size_t i = 0; i < merged.data.size(); ++i) {
      std::uint8_t expect = 0;
      for (int c = 3; c >= 1; --c) {
        if (decode_rle(reversed.at(c)).data[i]) expect = static_cast<std::uint8_t>(c);
      }
      CHECK(merged.data[i] == expect);
    }
  }
}

TEST_CASE("slice annotation counts") {
  SliceAnnotation a{4, LabelPlane(3, 2), std::nullopt};
  a.labels.data = {1, 0, 3, 3, 0, 2};
  CHECK(a.count(Category::bronchiectasis_airway_thickening) == 1);
  CHECK(a.count(Category::consolidation_atelectasis) == 2);
  CHECK(a.annotated_pixels() == 4);
}
