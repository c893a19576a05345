#include <doctest.h>
#include <httplib.h>
#include <png.h>

#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "apl/error.hpp"
#include "apl/nifti.hpp"
#include "apl/phantom.hpp"
#include "apl/service.hpp"
#include "test_support.hpp"

using namespace apl;
using namespace apl::service;
using apl::test::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

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

/// Deterministic clock advancing 7 ms per reading.
Clock stepping_clock() {
  auto t = std::make_shared<std::int64_t>(1000);
  return [t] { return *t += 7; };
}

struct Fixture {
  phantom::Phantom ph;
  std::vector<std::uint8_t> image;
  std::vector<std::uint8_t> mask;

  explicit Fixture(std::uint64_t seed, double noise = 0.0) : ph(make(seed, noise)) {
    image = nifti::encode_volume(ph.image);
    mask = nifti::encode_volume(ph.lung_truth.volume());
  }

  static phantom::Phantom make(std::uint64_t seed, double noise) {
    auto spec = phantom::random_spec(seed);
    spec.noise_sigma = noise;
    return phantom::generate(spec);
  }

  std::map<int, RleMask> truth_masks(std::int64_t z) const {
    const auto plane = ph.annotation_truth.axial_slice(z);
    LabelPlane narrow(plane.width, plane.height);
    for (std::size_t i = 0; i < plane.data.size(); ++i) narrow.data[i] = static_cast<std::uint8_t>(plane.data[i]);
    return split_categories(narrow);
  }
};

std::size_t session_dirs(const fs::path& root) {
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& d : fs::directory_iterator(root / "sessions")) ++n;
  return n;
}

std::int64_t off_plan(const SliceSamplePlan& plan) {
  for (std::int64_t z = 0;; ++z) {
    if (!plan.contains(z)) return z;
  }
}

/// Serves on a background thread; stops and joins on scope exit.
class RunningServer {
 public:
  explicit RunningServer(SessionStore& store) : server_(store) {
    port_ = server_.bind("127.0.0.1", 0);
    if (port_ > 0) thread_ = std::thread([this] { server_.listen_after_bind(); });
  }
  ~RunningServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  int port() const { return port_; }

 private:
  HttpServer server_;
  std::thread thread_;
  int port_ = -1;
};

Plane<std::uint8_t> decode_png(const std::string& bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  REQUIRE(png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) != 0);
  img.format = PNG_FORMAT_GRAY;
  Plane<std::uint8_t> out(img.width, img.height);
  REQUIRE(png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr) != 0);
  return out;
}

}  // namespace

TEST_CASE("create_session with an external mask") {
  TempDir dir("store");
  SessionStore store(dir.path(), stepping_clock());
  const Fixture f(3);
  const Session s = store.create_session(f.image, f.mask);
  CHECK(s.status == SessionStatus::annotating);
  CHECK(s.mask_source == MaskSource::external_file);
  CHECK(s.plan == sample_slices(lung_extent(f.ph.lung_truth)));
  CHECK(s.plan.slices.size() == 10);
  CHECK(s.image_ref == sha256_hex(f.image));
  CHECK(s.setup_ms == 7);
  CHECK(fs::exists(dir.path() / "sessions" / s.id / "session.json"));
  CHECK(fs::exists(dir.path() / "sessions" / s.id / "plan.json"));
  CHECK(fs::exists(dir.path() / "volumes" / (s.image_ref + ".nii")));
  CHECK(store.list() == std::vector<std::string>{s.id});
  CHECK(to_json(store.get(s.id)) == to_json(s));
  CHECK(store.mask_of(s.id)->volume().labels() == f.ph.lung_truth.volume().labels());
  CHECK(error_of([&] { store.get("ffff0000"); }) == ErrorCode::not_found);
  CHECK(error_of([&] { store.get("../x"); }) == ErrorCode::not_found);
}

TEST_CASE("create_session without a mask runs the fallback segmenter") {
  TempDir dir("store");
  SessionStore store(dir.path(), stepping_clock());
  const Fixture f(5);
  const Session s = store.create_session(f.image, std::nullopt);
  CHECK(s.mask_source == MaskSource::fallback_segmenter);
  CHECK(dice_score(store.mask_of(s.id)->volume(), f.ph.lung_truth.volume()) >= 0.9);
}

TEST_CASE("failed creates persist nothing") {
  TempDir dir("store");
  SessionStore store(dir.path(), stepping_clock());
  const Fixture f(3);
  std::vector<std::uint8_t> corrupt = f.image;
  corrupt.resize(200);
  CHECK_THROWS_AS(store.create_session(corrupt, std::nullopt), Error);
  CHECK_THROWS_AS(store.create_session({'x', 'y'}, std::nullopt), Error);

  const auto other = nifti::encode_volume(LabelVolume(apl::test::grid(4, 4, 4), std::vector<Label>(64, 1)));
  CHECK(error_of([&] { store.create_session(f.image, other); }) == ErrorCode::geometry);
  CHECK(session_dirs(dir.path()) == 0);
  CHECK(store.list().empty());
}

TEST_CASE("short extents sample every lung slice") {
  TempDir dir("store");
  SessionStore store(dir.path(), stepping_clock());
  phantom::PhantomSpec spec;
  spec.dims = {32, 32, 5};
  spec.body = {16.0, 16.0, 15.0, 15.0};
  spec.lungs = {phantom::Ellipsoid{{9.0, 16.0, 2.0}, {5.0, 9.0, 8.0}},
                phantom::Ellipsoid{{23.0, 16.0, 2.0}, {5.0, 9.0, 8.0}}};
  const auto ph = phantom::generate(spec);
  const Session s =
      store.create_session(nifti::encode_volume(ph.image), nifti::encode_volume(ph.lung_truth.volume()));
  CHECK(s.plan.slices == std::vector<std::int64_t>{0, 1, 2, 3, 4});
  CHECK(s.plan.short_extent);
  CHECK(json::parse(to_json(s))["plan"]["short_extent"] == true);
}

TEST_CASE("display windowing") {
  Plane<float> ramp(256, 1);
  for (int i = 0; i < 256; ++i) ramp.data[i] = static_cast<float>(i);
  const auto id = window_slice(ramp, 127.5, 255.0);
  for (int i = 0; i < 256; ++i) CHECK(id.data[i] == i);

  const auto narrow = window_slice(ramp, 100.0, 10.0);
  for (int i = 0; i < 256; ++i) {
    CAPTURE(i);
    if (i <= 95) CHECK(narrow.data[i] == 0);
    if (i >= 105) CHECK(narrow.data[i] == 255);
  }
  CHECK(narrow.data[100] == 128);

  const Plane<float> flat(4, 4, 7.0F);
  CHECK(window_slice(flat, 7.0, 1.0).data == std::vector<std::uint8_t>(16, 128));
  CHECK(error_of([&] { window_slice(flat, 0.0, 0.0); }) == ErrorCode::validation);

  const auto pgm = encode_pgm(id);
  const std::string head = "P5\n256 1\n255\n";
  CHECK(std::string(pgm.begin(), pgm.begin() + static_cast<std::ptrdiff_t>(head.size())) == head);
  CHECK(pgm.size() == head.size() + 256);
  const auto png = encode_png(id);
  CHECK(decode_png(std::string(png.begin(), png.end())) == id);
}

TEST_CASE("slice fetches start the timing span once") {
  TempDir dir("store");
  SessionStore store(dir.path(), stepping_clock());
  const Fixture f(3);
  const Session s = store.create_session(f.image, f.mask);
  const std::int64_t z = s.plan.slices[2];
  const auto raster = store.slice_image(s.id, z, std::nullopt, std::nullopt);
  const auto [lo, hi] = f.ph.image.value_range();
  CHECK(raster == window_slice(f.ph.image.axial_slice(z), (lo + hi) / 2.0, hi - lo));
  const auto first = store.get(s.id).timings.at(z).start_ms;
  REQUIRE(first.has_value());
  store.slice_image(s.id, z, 0.0, 50.0);
  CHECK(store.get(s.id).timings.at(z).start_ms == first);
  CHECK_FALSE(store.get(s.id).timings.at(z).end_ms.has_value());

  CHECK(error_of([&] { store.slice_image(s.id, off_plan(s.plan), std::nullopt, std::nullopt); }) ==
        ErrorCode::not_found);
  CHECK(error_of([&] { store.slice_image(s.id, z, 0.0, -1.0); }) == ErrorCode::validation);
}

TEST_CASE("lung mask RLE decodes to the mask plane") {
  TempDir dir("store");
  SessionStore store(dir.path(), stepping_clock());
  const Fixture f(4);
  const Session s = store.create_session(f.image, f.mask);
  for (std::int64_t z : s.plan.slices) {
    const auto rle = store.lung_mask_rle(s.id, z);
    REQUIRE(rle.size() == 2);
    const auto plane = f.ph.lung_truth.volume().axial_slice(z);
    const auto right = decode_rle(rle[0]);
    const auto left = decode_rle(rle[1]);
    CHECK(rle[0].category == kRightLung);
    CHECK(rle[1].category == kLeftLung);
    for (std::size_t i = 0; i < plane.data.size(); ++i) {
      CHECK(right.data[i] == (plane.data[i] == kRightLung ? 1 : 0));
      CHECK(left.data[i] == (plane.data[i] == kLeftLung ? 1 : 0));
    }
  }
}

TEST_CASE("put_annotation validates, counts and is idempotent") {
  TempDir dir("store");
  SessionStore store(dir.path(), stepping_clock());
  const Fixture f(6);
  const Session s = store.create_session(f.image, f.mask);
  const std::int64_t z = s.plan.slices[4];
  const auto masks = f.truth_masks(z);

  Session after = store.put_annotation(s.id, z, masks);
  CHECK(after.completed_slices() == 1);
  const SliceTiming t = after.timings.at(z);
  REQUIRE(t.start_ms.has_value());
  REQUIRE(t.end_ms.has_value());
  CHECK(after.annotations.at(z).labels == merge_category_masks(masks, after.annotations.at(z).labels.width,
                                                               after.annotations.at(z).labels.height));
  CHECK(fs::exists(dir.path() / "sessions" / s.id / "annotations" / (std::to_string(z) + ".json")));

  // Resubmitting the same content changes nothing, including timings.
  after = store.put_annotation(s.id, z, masks);
  CHECK(after.completed_slices() == 1);
  CHECK(after.timings.at(z) == t);

  // A different submission replaces the slice and extends the span.
  after = store.put_annotation(s.id, z, {});
  CHECK(after.completed_slices() == 1);
  CHECK(after.annotations.at(z).annotated_pixels() == 0);
  CHECK(after.timings.at(z).start_ms == t.start_ms);
  CHECK(*after.timings.at(z).end_ms > *t.end_ms);

  const auto w = f.ph.image.geometry().plane_width();
  const auto h = f.ph.image.geometry().plane_height();
  CHECK(error_of([&] { store.put_annotation(s.id, z, {{1, RleMask{w + 1, h, 1, {}}}}); }) == ErrorCode::validation);
  CHECK(error_of([&] { store.put_annotation(s.id, z, {{1, RleMask{w, h, 2, {}}}}); }) == ErrorCode::validation);
  CHECK(error_of([&] { store.put_annotation(s.id, z, {{4, RleMask{w, h, 4, {}}}}); }) == ErrorCode::validation);
  CHECK(error_of([&] { store.put_annotation(s.id, z, {{1, RleMask{w, h, 1, {{0, w * h + 1}}}}}); }) ==
        ErrorCode::validation);
  CHECK(error_of([&] { store.put_annotation(s.id, off_plan(s.plan), {}); }) == ErrorCode::not_found);
  CHECK(error_of([&] { store.put_annotation("abcdef", z, {}); }) == ErrorCode::not_found);
}

TEST_CASE("finalize scores stored annotations against the library") {
  TempDir dir("store");
  SessionStore store(dir.path(), stepping_clock());
  const Fixture f(7);
  const Session s = store.create_session(f.image, f.mask);
  CHECK(error_of([&] { store.report(s.id); }) == ErrorCode::not_found);
  for (std::int64_t z : s.plan.slices) store.put_annotation(s.id, z, f.truth_masks(z));

  const std::string text = store.finalize(s.id, {.cell_edge = 1, .tau = 0.5, .clip_to_lung = true});
  const json doc = json::parse(text);
  const auto truth = annotations_from_volume(f.ph.annotation_truth, s.plan);
  const ScoreReport expect = pixel_score(f.ph.lung_truth, truth, s.plan);
  CHECK(score_report_from_json(doc["pixel"].dump()) == expect);
  CHECK(expect.total_ratio > 0.0);
  const ScoreReport grid = score_report_from_json(doc["grid"].dump());
  CHECK(grid.total_ratio == doctest::Approx(expect.total_ratio).epsilon(1e-12));
  CHECK(doc["completed"] == 10);
  CHECK(doc["total"] == 10);
  CHECK(doc["timing"]["total_ms"] == doc["timing"]["setup_ms"].get<std::int64_t>() +
                                         doc["timing"]["annotation_ms"].get<std::int64_t>());
  CHECK(doc["timing"]["per_slice_ms"].size() == 10);

  CHECK(store.report(s.id) == text);
  CHECK(store.get(s.id).status == SessionStatus::finalized);
  CHECK(error_of([&] { store.finalize(s.id); }) == ErrorCode::conflict);
  CHECK(error_of([&] { store.put_annotation(s.id, s.plan.slices[0], {}); }) == ErrorCode::conflict);
}

TEST_CASE("finalize with no annotations gives zero ratios") {
  TempDir dir("store");
  SessionStore store(dir.path(), stepping_clock());
  const Fixture f(8);
  const Session s = store.create_session(f.image, f.mask);
  const json doc = json::parse(store.finalize(s.id));
  const ScoreReport pixel = score_report_from_json(doc["pixel"].dump());
  CHECK(pixel.total_ratio == 0.0);
  CHECK(pixel.per_category_ratio == std::array<double, 3>{0.0, 0.0, 0.0});
  CHECK(pixel.lung_voxels > 0);
  CHECK(score_report_from_json(doc["grid"].dump()).total_ratio == 0.0);
  CHECK(doc["completed"] == 0);
}

TEST_CASE("sessions survive a store reload byte for byte") {
  TempDir dir("store");
  const Fixture f(9);
  std::string id;
  std::string report;
  std::string partial_id;
  std::string partial_doc;
  {
    SessionStore store(dir.path(), stepping_clock());
    const Session s = store.create_session(f.image, f.mask);
    id = s.id;
    for (std::int64_t z : s.plan.slices) {
      store.slice_image(id, z, std::nullopt, std::nullopt);
      store.put_annotation(id, z, f.truth_masks(z));
    }
    report = store.finalize(id);

    const Session p = store.create_session(f.image, std::nullopt);
    partial_id = p.id;
    store.put_annotation(partial_id, p.plan.slices[1], f.truth_masks(p.plan.slices[1]));
    store.slice_image(partial_id, p.plan.slices[3], std::nullopt, std::nullopt);
    partial_doc = to_json(store.get(partial_id));
  }
  SessionStore again(dir.path(), stepping_clock());
  CHECK(again.report(id) == report);
  CHECK(again.get(id).status == SessionStatus::finalized);
  CHECK(error_of([&] { again.finalize(id); }) == ErrorCode::conflict);
  auto ids = std::vector<std::string>{id, partial_id};
  std::sort(ids.begin(), ids.end());
  CHECK(again.list() == ids);

  CHECK(to_json(again.get(partial_id)) == partial_doc);
  CHECK(again.get(partial_id).annotations.size() == 1);
  CHECK(again.mask_of(partial_id)->source() == MaskSource::fallback_segmenter);
  CHECK_NOTHROW(again.finalize(partial_id));
}

TEST_CASE("damaged session documents report corruption") {
  TempDir dir("store");
  const Fixture f(3);
  std::string id;
  {
    SessionStore store(dir.path(), stepping_clock());
    id = store.create_session(f.image, f.mask).id;
  }
  std::ofstream(dir.path() / "sessions" / id / "session.json") << "{\"id\": ";
  SessionStore again(dir.path(), stepping_clock());
  CHECK(error_of([&] { again.get(id); }) == ErrorCode::corrupt);
}

TEST_CASE("concurrent annotations on distinct slices all land") {
  TempDir dir("store");
  SessionStore store(dir.path());
  const Fixture f(10);
  const Session s = store.create_session(f.image, f.mask);
  std::vector<std::thread> workers;
  for (std::int64_t z : s.plan.slices) {
    workers.emplace_back([&, z] { store.put_annotation(s.id, z, f.truth_masks(z)); });
  }
  for (auto& w : workers) w.join();
  CHECK(store.get(s.id).completed_slices() == s.plan.slices.size());
  const json doc = json::parse(store.finalize(s.id));
  CHECK(score_report_from_json(doc["pixel"].dump()) ==
        pixel_score(f.ph.lung_truth, annotations_from_volume(f.ph.annotation_truth, s.plan), s.plan));
}

TEST_CASE("HTTP routes") {
  TempDir dir("http");
  SessionStore store(dir.path(), stepping_clock());
  RunningServer server(store);
  REQUIRE(server.port() > 0);
  httplib::Client cli("127.0.0.1", server.port());

  const Fixture f(11);
  nifti::write_volume(f.ph.image, dir / "image.nii.gz");
  nifti::write_volume(f.ph.lung_truth.volume(), dir / "mask.nii.gz");

  auto expect_error = [](const httplib::Result& r, int status, const std::string& code) {
    REQUIRE(r);
    CHECK(r->status == status);
    const json j = json::parse(r->body);
    CHECK(j["code"] == code);
    CHECK(j.contains("message"));
  };

  const json body{{"image_path", (dir / "image.nii.gz").string()}, {"mask_path", (dir / "mask.nii.gz").string()}};
  auto created = cli.Post("/sessions", body.dump(), "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 201);
  const json session = json::parse(created->body);
  const std::string id = session["id"];
  CHECK(session["status"] == "annotating");
  CHECK(session["total"] == 10);
  const auto plan = session["plan"]["slices"].get<std::vector<std::int64_t>>();
  REQUIRE(plan.size() == 10);

  auto listed = cli.Get("/sessions");
  REQUIRE(listed);
  CHECK(json::parse(listed->body)["sessions"] == json::array({id}));
  auto got = cli.Get("/sessions/" + id);
  REQUIRE(got);
  CHECK(got->status == 200);
  CHECK(json::parse(got->body)["plan"] == session["plan"]);

  auto png = cli.Get("/sessions/" + id + "/slices/" + std::to_string(plan[0]) + "/image?wc=200&ww=900");
  REQUIRE(png);
  CHECK(png->status == 200);
  CHECK(png->get_header_value("Content-Type") == "image/png");
  CHECK(decode_png(png->body) == window_slice(f.ph.image.axial_slice(plan[0]), 200.0, 900.0));
  auto pgm = cli.Get("/sessions/" + id + "/slices/" + std::to_string(plan[0]) + "/image?format=pgm");
  REQUIRE(pgm);
  CHECK(pgm->body.rfind("P5\n", 0) == 0);

  auto lung = cli.Get("/sessions/" + id + "/slices/" + std::to_string(plan[1]) + "/lungmask");
  REQUIRE(lung);
  std::istringstream lines(lung->body);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(parse_wire(line) == store.lung_mask_rle(id, plan[1])[0]);

  auto slices = cli.Get("/sessions/" + id + "/slices");
  REQUIRE(slices);
  const json sl = json::parse(slices->body);
  CHECK(sl["total"] == 10);
  CHECK(sl["slices"][0]["start_ms"].is_number());

  for (std::size_t i = 0; i < plan.size(); ++i) {
    std::string wire;
    for (const auto& [c, m] : f.truth_masks(plan[i])) wire += to_wire(m) + "\n";
    // Alternate the two accepted body forms.
    std::string payload = wire;
    if (i % 2 == 1) {
      json arr = json::array();
      for (const auto& [c, m] : f.truth_masks(plan[i])) arr.push_back(to_wire(m));
      payload = json{{"masks", arr}}.dump();
    }
    auto put = cli.Put("/sessions/" + id + "/slices/" + std::to_string(plan[i]) + "/annotation", payload,
                       "text/plain");
    REQUIRE(put);
    CHECK(put->status == 200);
    CHECK(json::parse(put->body)["completed"] == i + 1);
  }

  const std::string slice0 = "/sessions/" + id + "/slices/" + std::to_string(plan[0]);
  expect_error(cli.Put(slice0 + "/annotation", "3,3,1;0:2,", "text/plain"), 400, "validation");
  expect_error(cli.Put(slice0 + "/annotation", "{\"masks\": 3}", "application/json"), 400, "validation");
  expect_error(cli.Get(slice0 + "/image?ww=abc"), 400, "validation");
  expect_error(cli.Get(slice0 + "/image?format=gif"), 400, "validation");
  expect_error(cli.Get("/sessions/" + id + "/slices/" + std::to_string(off_plan(store.get(id).plan)) + "/image"), 404, "not_found");
  expect_error(cli.Get("/sessions/0123abcd"), 404, "not_found");
  expect_error(cli.Get("/nothing/here"), 404, "not_found");
  expect_error(cli.Get("/sessions/" + id + "/report"), 404, "not_found");
  expect_error(cli.Post("/sessions", "{\"image_path\": \"/no/such/file.nii\"}", "application/json"), 404,
               "not_found");
  expect_error(cli.Post("/sessions", "not json", "application/json"), 400, "validation");

  auto fin = cli.Post("/sessions/" + id + "/finalize", "{\"cell_edge\": 1}", "application/json");
  REQUIRE(fin);
  CHECK(fin->status == 200);
  const json report = json::parse(fin->body);
  CHECK(score_report_from_json(report["pixel"].dump()) ==
        pixel_score(f.ph.lung_truth, annotations_from_volume(f.ph.annotation_truth, store.get(id).plan),
                    store.get(id).plan));
  auto rep = cli.Get("/sessions/" + id + "/report");
  REQUIRE(rep);
  CHECK(rep->body == fin->body);
  expect_error(cli.Post("/sessions/" + id + "/finalize", "", "application/json"), 409, "conflict");
  expect_error(cli.Put(slice0 + "/annotation", "", "text/plain"), 409, "conflict");

  httplib::MultipartFormDataItems form{
      {"image", std::string(f.image.begin(), f.image.end()), "image.nii", "application/octet-stream"},
      {"k", "4", "", ""},
  };
  auto multi = cli.Post("/sessions", form);
  REQUIRE(multi);
  CHECK(multi->status == 201);
  const json m = json::parse(multi->body);
  CHECK(m["mask_source"] == "fallback_segmenter");
  CHECK(m["total"] == 4);
  expect_error(cli.Post("/sessions", httplib::MultipartFormDataItems{{"mask", "x", "m.nii", ""}}), 400,
               "validation");
}
