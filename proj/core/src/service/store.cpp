#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "apl/error.hpp"
#include "apl/nifti.hpp"
#include "apl/service.hpp"

namespace apl::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Write-then-rename so readers never observe a partial document.
void write_atomic(const fs::path& p, std::string_view bytes) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::write, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::write, "short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::string random_id() {
  std::random_device rd;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  for (int i = 0; i < 8; ++i) {
    const auto word = rd();
    id += kHex[(word >> 12) & 0xF];
    id += kHex[(word >> 8) & 0xF];
    id += kHex[(word >> 4) & 0xF];
    id += kHex[word & 0xF];
  }
  return id;
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

SessionStatus status_from(const std::string& s) {
  if (s == "created") return SessionStatus::created;
  if (s == "segmenting") return SessionStatus::segmenting;
  if (s == "annotating") return SessionStatus::annotating;
  if (s == "finalized") return SessionStatus::finalized;
  throw Error(ErrorCode::validation, "unknown session status " + s);
}

MaskSource mask_source_from(const std::string& s) {
  if (s == "fallback_segmenter") return MaskSource::fallback_segmenter;
  if (s == "manual") return MaskSource::manual;
  return MaskSource::external_file;
}

json plan_json(const SliceSamplePlan& p) {
  return json{{"z_min", p.z_min}, {"z_max", p.z_max},        {"k_requested", p.k_requested},
              {"slices", p.slices}, {"short_extent", p.short_extent}, {"extent", p.extent()}};
}

SliceSamplePlan plan_from(const json& j) {
  SliceSamplePlan p;
  p.z_min = j.at("z_min").get<std::int64_t>();
  p.z_max = j.at("z_max").get<std::int64_t>();
  p.k_requested = j.at("k_requested").get<std::int64_t>();
  p.slices = j.at("slices").get<std::vector<std::int64_t>>();
  p.short_extent = j.at("short_extent").get<bool>();
  return p;
}

json annotation_json(const SliceAnnotation& a) {
  json masks = json::object();
  for (const auto& [c, m] : split_categories(a.labels)) masks[std::to_string(c)] = to_wire(m);
  json j{{"z", a.z}, {"width", a.labels.width}, {"height", a.labels.height}, {"masks", masks}};
  if (a.annotated_at) j["annotated_at"] = {{"start_ms", a.annotated_at->start_ms}, {"end_ms", a.annotated_at->end_ms}};
  return j;
}

SliceAnnotation annotation_from(const json& j) {
  SliceAnnotation a;
  a.z = j.at("z").get<std::int64_t>();
  std::map<int, RleMask> masks;
  for (const auto& [k, v] : j.at("masks").items()) masks.emplace(std::stoi(k), parse_wire(v.get<std::string>()));
  a.labels = merge_category_masks(masks, j.at("width").get<std::int64_t>(), j.at("height").get<std::int64_t>());
  if (j.contains("annotated_at")) {
    a.annotated_at = Timestamps{j["annotated_at"].at("start_ms").get<std::int64_t>(),
                                j["annotated_at"].at("end_ms").get<std::int64_t>()};
  }
  return a;
}

json timing_json(const TimingSummary& t) {
  json per = json::object();
  for (const auto& [z, ms] : t.per_slice_ms) per[std::to_string(z)] = ms;
  return json{{"setup_ms", t.setup_ms}, {"per_slice_ms", per}, {"annotation_ms", t.annotation_ms},
              {"total_ms", t.total_ms}};
}

}  // namespace

std::string_view to_string(SessionStatus s) noexcept {
  switch (s) {
    case SessionStatus::created: return "created";
    case SessionStatus::segmenting: return "segmenting";
    case SessionStatus::annotating: return "annotating";
    case SessionStatus::finalized: return "finalized";
  }
  return "created";
}

void Session::advance(SessionStatus next) {
  if (static_cast<int>(next) <= static_cast<int>(status)) {
    throw Error(ErrorCode::conflict, "session " + id + " cannot move from " + std::string(to_string(status)) +
                                         " to " + std::string(to_string(next)));
  }
  status = next;
}

std::string to_json(const Session& s) {
  json timings = json::object();
  for (const auto& [z, t] : s.timings) {
    json jt = json::object();
    jt["start_ms"] = t.start_ms ? json(*t.start_ms) : json(nullptr);
    jt["end_ms"] = t.end_ms ? json(*t.end_ms) : json(nullptr);
    timings[std::to_string(z)] = jt;
  }
  std::vector<std::int64_t> done;
  for (const auto& [z, a] : s.annotations) done.push_back(z);
  json j{{"id", s.id},
         {"image_ref", s.image_ref},
         {"mask_ref", s.mask_ref},
         {"mask_source", to_string(s.mask_source)},
         {"status", to_string(s.status)},
         {"plan", plan_json(s.plan)},
         {"annotated_slices", done},
         {"completed", done.size()},
         {"total", s.plan.slices.size()},
         {"timings", timings},
         {"created_at_ms", s.created_at_ms},
         {"setup_ms", s.setup_ms},
         {"warnings", s.warnings}};
  return j.dump();
}

std::int64_t system_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::io, "sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xF];
  }
  return out;
}

struct SessionStore::Entry {
  std::mutex mutex;
  Session session;
  std::shared_ptr<const ImageVolume> image;
  std::shared_ptr<const LungMask> mask;
  std::optional<std::string> report;
  std::uint64_t version = 0;
};

SessionStore::SessionStore(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {
  fs::create_directories(root_ / "volumes");
  fs::create_directories(root_ / "sessions");
}

SessionStore::~SessionStore() = default;

fs::path SessionStore::session_dir(const std::string& id) const { return root_ / "sessions" / id; }

std::string SessionStore::store_volume(const std::vector<std::uint8_t>& bytes) {
  const std::string hash = sha256_hex(bytes);
  const fs::path p = root_ / "volumes" / (hash + ".nii");
  if (!fs::exists(p)) {
    write_atomic(p, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  return hash;
}

void SessionStore::persist_session(const Entry& e) {
  const fs::path dir = session_dir(e.session.id);
  write_atomic(dir / "plan.json", plan_json(e.session.plan).dump());
  write_atomic(dir / "session.json", to_json(e.session));
}

void SessionStore::persist_annotation(const Entry& e, const SliceAnnotation& a) {
  const fs::path dir = session_dir(e.session.id) / "annotations";
  fs::create_directories(dir);
  write_atomic(dir / (std::to_string(a.z) + ".json"), annotation_json(a).dump());
}

Session SessionStore::create_session(const std::vector<std::uint8_t>& image_bytes,
                                     const std::optional<std::vector<std::uint8_t>>& mask_bytes,
                                     const CreateOptions& options) {
  const std::int64_t started = clock_();
  auto e = std::make_shared<Entry>();
  Session& s = e->session;
  s.created_at_ms = started;

  auto image = std::make_shared<const ImageVolume>(nifti::to_image(nifti::parse_volume(image_bytes)));
  s.advance(SessionStatus::segmenting);
  std::shared_ptr<const LungMask> mask;
  if (mask_bytes) {
    const LabelVolume raw = nifti::to_labels(nifti::parse_volume(*mask_bytes));
    if (!raw.geometry().same_grid(image->geometry())) {
      throw Error(ErrorCode::geometry, "mask dimensions do not match the image");
    }
    mask = std::make_shared<const LungMask>(
        ingest_mask(raw, options.binarize_threshold, options.split, MaskSource::external_file));
  } else {
    mask = std::make_shared<const LungMask>(fallback_segment(*image, options.split));
  }
  s.mask_source = mask->source();
  s.warnings = mask->warnings();
  s.plan = sample_slices(lung_extent(*mask), options.k);
  s.advance(SessionStatus::annotating);

  s.image_ref = store_volume(image_bytes);
  s.mask_ref = store_volume(nifti::encode_volume(mask->volume(), {.datatype = std::nullopt, .gzip = true}));
  e->image = image;
  e->mask = mask;

  // Build the session directory under a temporary name so a failed create
  // leaves nothing behind.
  std::string id;
  do {
    id = random_id();
  } while (fs::exists(session_dir(id)));
  s.id = id;
  s.setup_ms = clock_() - started;
  const fs::path staging = root_ / "sessions" / ("." + id + ".staging");
  fs::create_directories(staging / "annotations");
  write_atomic(staging / "plan.json", plan_json(s.plan).dump());
  write_atomic(staging / "session.json", to_json(s));
  fs::rename(staging, session_dir(id));

  std::lock_guard lock(mutex_);
  entries_[id] = e;
  return s;
}

std::shared_ptr<SessionStore::Entry> SessionStore::load(const std::string& id) {
  const fs::path dir = session_dir(id);
  if (!valid_id(id) || !fs::is_directory(dir)) throw Error(ErrorCode::not_found, "no session " + id);
  auto e = std::make_shared<Entry>();
  Session& s = e->session;
  try {
    const json j = json::parse(read_text(dir / "session.json"));
    s.id = j.at("id").get<std::string>();
    s.image_ref = j.at("image_ref").get<std::string>();
    s.mask_ref = j.at("mask_ref").get<std::string>();
    s.mask_source = mask_source_from(j.at("mask_source").get<std::string>());
    s.status = status_from(j.at("status").get<std::string>());
    s.created_at_ms = j.at("created_at_ms").get<std::int64_t>();
    s.setup_ms = j.at("setup_ms").get<std::int64_t>();
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("timings").items()) {
      SliceTiming t;
      if (!v.at("start_ms").is_null()) t.start_ms = v["start_ms"].get<std::int64_t>();
      if (!v.at("end_ms").is_null()) t.end_ms = v["end_ms"].get<std::int64_t>();
      s.timings[std::stoll(k)] = t;
    }
    s.plan = plan_from(json::parse(read_text(dir / "plan.json")));
    if (fs::is_directory(dir / "annotations")) {
      for (const auto& f : fs::directory_iterator(dir / "annotations")) {
        if (f.path().extension() != ".json") continue;
        SliceAnnotation a = annotation_from(json::parse(read_text(f.path())));
        s.annotations[a.z] = std::move(a);
      }
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::corrupt, "session " + id + " on disk is damaged: " + ex.what());
  }
  if (fs::exists(dir / "report.json")) {
    e->report = read_text(dir / "report.json");
    s.status = SessionStatus::finalized;
  }
  return e;
}

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string& id) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(id); it != entries_.end()) return it->second;
  }
  auto e = load(id);
  std::lock_guard lock(mutex_);
  return entries_.try_emplace(id, std::move(e)).first->second;
}

void SessionStore::ensure_volumes(Entry& e) {
  if (!e.image) {
    e.image = std::make_shared<const ImageVolume>(
        nifti::read_image(root_ / "volumes" / (e.session.image_ref + ".nii")));
  }
  if (!e.mask) {
    e.mask = std::make_shared<const LungMask>(
        nifti::read_labels(root_ / "volumes" / (e.session.mask_ref + ".nii")), e.session.mask_source,
        e.session.warnings);
  }
}

Session SessionStore::get(const std::string& id) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  return e->session;
}

std::vector<std::string> SessionStore::list() {
  std::vector<std::string> ids;
  for (const auto& d : fs::directory_iterator(root_ / "sessions")) {
    const std::string name = d.path().filename().string();
    if (d.is_directory() && valid_id(name)) ids.push_back(name);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::shared_ptr<const LungMask> SessionStore::mask_of(const std::string& id) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  ensure_volumes(*e);
  return e->mask;
}

Plane<std::uint8_t> SessionStore::slice_image(const std::string& id, std::int64_t z, std::optional<double> centre,
                                              std::optional<double> width) {
  auto e = entry(id);
  std::shared_ptr<const ImageVolume> image;
  {
    std::lock_guard lock(e->mutex);
    if (!e->session.plan.contains(z)) {
      throw Error(ErrorCode::not_found, "slice " + std::to_string(z) + " is not in the sampling plan");
    }
    ensure_volumes(*e);
    image = e->image;
    if (e->session.status == SessionStatus::annotating && !e->session.timings[z].start_ms) {
      e->session.timings[z].start_ms = clock_();
      persist_session(*e);
    }
  }
  const auto [lo, hi] = image->value_range();
  const double c = centre.value_or((static_cast<double>(lo) + hi) / 2.0);
  const double w = width.value_or(hi > lo ? static_cast<double>(hi) - lo : 1.0);
  if (!(w > 0.0) || !std::isfinite(w) || !std::isfinite(c)) {
    throw Error(ErrorCode::validation, "window width must be positive and finite");
  }
  return window_slice(image->axial_slice(z), c, w);
}

std::vector<RleMask> SessionStore::lung_mask_rle(const std::string& id, std::int64_t z) {
  auto e = entry(id);
  std::shared_ptr<const LungMask> mask;
  {
    std::lock_guard lock(e->mutex);
    if (!e->session.plan.contains(z)) {
      throw Error(ErrorCode::not_found, "slice " + std::to_string(z) + " is not in the sampling plan");
    }
    ensure_volumes(*e);
    mask = e->mask;
  }
  const Plane<Label> plane = mask->volume().axial_slice(z);
  Plane<std::uint8_t> narrow(plane.width, plane.height);
  for (std::size_t i = 0; i < plane.data.size(); ++i) narrow.data[i] = static_cast<std::uint8_t>(plane.data[i]);
  return {encode_rle_value(narrow, kRightLung, kRightLung), encode_rle_value(narrow, kLeftLung, kLeftLung)};
}

Session SessionStore::put_annotation(const std::string& id, std::int64_t z, const std::map<int, RleMask>& masks) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  Session& s = e->session;
  if (s.status == SessionStatus::finalized) throw Error(ErrorCode::conflict, "session " + id + " is finalized");
  if (s.status != SessionStatus::annotating) throw Error(ErrorCode::conflict, "session " + id + " is not annotating");
  if (!s.plan.contains(z)) throw Error(ErrorCode::not_found, "slice " + std::to_string(z) + " is not in the sampling plan");
  ensure_volumes(*e);
  const auto& g = e->mask->geometry();
  LabelPlane merged;
  try {
    for (const auto& [c, m] : masks) {
      category_from_code(c);
      if (m.category != c) throw Error(ErrorCode::validation, "mask category field disagrees with its key");
      if (m.width != g.plane_width() || m.height != g.plane_height()) {
        throw Error(ErrorCode::validation, "annotation plane dims do not match the volume");
      }
      m.validate();
    }
    merged = merge_category_masks(masks, g.plane_width(), g.plane_height());
  } catch (const Error& ex) {
    throw Error(ErrorCode::validation, ex.what());
  }

  if (auto it = s.annotations.find(z); it != s.annotations.end() && it->second.labels == merged) return s;

  const std::int64_t now = clock_();
  SliceTiming& t = s.timings[z];
  if (!t.start_ms) t.start_ms = now;
  t.end_ms = now;
  SliceAnnotation a{z, std::move(merged), Timestamps{*t.start_ms, now}};
  persist_annotation(*e, a);
  s.annotations[z] = std::move(a);
  persist_session(*e);
  ++e->version;
  return s;
}

std::string SessionStore::finalize(const std::string& id, const FinalizeOptions& options) {
  auto e = entry(id);
  while (true) {
    std::vector<SliceAnnotation> snapshot;
    std::uint64_t version = 0;
    Session meta;
    std::shared_ptr<const LungMask> mask;
    {
      std::lock_guard lock(e->mutex);
      if (e->session.status == SessionStatus::finalized) throw Error(ErrorCode::conflict, "session " + id + " is already finalized");
      if (e->session.status != SessionStatus::annotating) throw Error(ErrorCode::conflict, "session " + id + " is not annotating");
      ensure_volumes(*e);
      for (const auto& [z, a] : e->session.annotations) snapshot.push_back(a);
      version = e->version;
      meta = e->session;
      mask = e->mask;
    }

    FinalReport fr;
    fr.pixel = pixel_score(*mask, snapshot, meta.plan, options.clip_to_lung);
    GridParams gp{options.cell_edge.value_or(default_cell_edge(*mask, meta.plan)), options.tau};
    fr.grid = grid_score(*mask, snapshot, meta.plan, gp);
    fr.timing.setup_ms = meta.setup_ms;
    for (const auto& [z, t] : meta.timings) {
      if (t.start_ms && t.end_ms) {
        fr.timing.per_slice_ms[z] = *t.end_ms - *t.start_ms;
        fr.timing.annotation_ms += *t.end_ms - *t.start_ms;
      }
    }
    fr.timing.total_ms = fr.timing.setup_ms + fr.timing.annotation_ms;

    const json doc{{"session_id", id},
                   {"pixel", json::parse(apl::to_json(fr.pixel))},
                   {"grid", json::parse(apl::to_json(fr.grid))},
                   {"timing", timing_json(fr.timing)},
                   {"completed", meta.annotations.size()},
                   {"total", meta.plan.slices.size()}};
    std::string text = doc.dump();

    std::lock_guard lock(e->mutex);
    if (e->version != version) continue;  // an annotation landed while scoring
    write_atomic(session_dir(id) / "report.json", text);
    e->session.advance(SessionStatus::finalized);
    persist_session(*e);
    e->report = text;
    return text;
  }
}

std::string SessionStore::report(const std::string& id) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  if (!e->report) throw Error(ErrorCode::not_found, "session " + id + " has no report yet");
  return *e->report;
}

}  // namespace apl::service
