#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "apl/annotation.hpp"
#include "apl/lungmask.hpp"
#include "apl/sampling.hpp"
#include "apl/scoring.hpp"

namespace httplib {
class Server;
}

namespace apl::service {

enum class SessionStatus { created, segmenting, annotating, finalized };
std::string_view to_string(SessionStatus s) noexcept;

struct SliceTiming {
  std::optional<std::int64_t> start_ms;
  std::optional<std::int64_t> end_ms;
  bool operator==(const SliceTiming&) const = default;
};

struct Session {
  std::string id;
  std::string image_ref;
  std::string mask_ref;
  MaskSource mask_source = MaskSource::external_file;
  SliceSamplePlan plan;
  std::map<std::int64_t, SliceAnnotation> annotations;
  SessionStatus status = SessionStatus::created;
  std::map<std::int64_t, SliceTiming> timings;
  std::int64_t created_at_ms = 0;
  std::int64_t setup_ms = 0;
  std::vector<std::string> warnings;

  /// Moves the status forward; throws Error(conflict) on any backward or
  /// repeated transition.
  void advance(SessionStatus next);
  std::size_t completed_slices() const noexcept { return annotations.size(); }
};

struct TimingSummary {
  std::int64_t setup_ms = 0;
  std::map<std::int64_t, std::int64_t> per_slice_ms;
  std::int64_t annotation_ms = 0;
  std::int64_t total_ms = 0;
};

struct FinalReport {
  ScoreReport pixel;
  ScoreReport grid;
  TimingSummary timing;
};

/// Wire document for GET /sessions/{id}.
std::string to_json(const Session& s);

struct FinalizeOptions {
  std::optional<std::int64_t> cell_edge;
  double tau = kDefaultLungCellThreshold;
  bool clip_to_lung = true;
};

struct CreateOptions {
  std::int64_t k = kDefaultSliceCount;
  SplitOptions split{};
  std::optional<Label> binarize_threshold;
};

using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

/// Linear display windowing to 8 bits, rounding half up.
Plane<std::uint8_t> window_slice(const Plane<float>& slice, double centre, double width);
std::vector<std::uint8_t> encode_png(const Plane<std::uint8_t>& raster);
std::vector<std::uint8_t> encode_pgm(const Plane<std::uint8_t>& raster);

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

/// Directory-backed session store:
///   volumes/<sha256>.nii            content-addressed uploads and generated masks
///   sessions/<id>/session.json      status, refs, timings
///   sessions/<id>/plan.json
///   sessions/<id>/annotations/<z>.json
///   sessions/<id>/report.json       written once at finalize
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root, Clock clock = system_clock_ms);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Image/mask given as encoded NIfTI bytes. Nothing is persisted on failure.
  Session create_session(const std::vector<std::uint8_t>& image,
                         const std::optional<std::vector<std::uint8_t>>& mask,
                         const CreateOptions& options = {});

  Session get(const std::string& id);
  std::vector<std::string> list();

  /// Windowed slice; the first fetch of each slice starts its timing span.
  /// Defaults centre/width to the image value range.
  Plane<std::uint8_t> slice_image(const std::string& id, std::int64_t z, std::optional<double> centre,
                                  std::optional<double> width);

  /// One RLE mask per lung label present on slice z (category = lung label).
  std::vector<RleMask> lung_mask_rle(const std::string& id, std::int64_t z);

  Session put_annotation(const std::string& id, std::int64_t z, const std::map<int, RleMask>& masks);

  /// Scores the stored annotations, persists report.json and returns its bytes.
  std::string finalize(const std::string& id, const FinalizeOptions& options = {});

  /// Persisted report.json bytes; Error(not_found) before finalize.
  std::string report(const std::string& id);

  /// Lung mask of a session, loaded from the volume store.
  std::shared_ptr<const LungMask> mask_of(const std::string& id);

 private:
  struct Entry;
  std::shared_ptr<Entry> entry(const std::string& id);
  std::shared_ptr<Entry> load(const std::string& id);
  void persist_session(const Entry& e);
  void persist_annotation(const Entry& e, const SliceAnnotation& a);
  std::filesystem::path session_dir(const std::string& id) const;
  std::string store_volume(const std::vector<std::uint8_t>& bytes);
  void ensure_volumes(Entry& e);

  std::filesystem::path root_;
  Clock clock_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
};

/// HTTP front end over a SessionStore.
class HttpServer {
 public:
  explicit HttpServer(SessionStore& store);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool listen_after_bind();
  void stop();
  bool is_running() const;

 private:
  void install_routes();
  SessionStore& store_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace apl::service
