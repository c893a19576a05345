#include <httplib.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "apl/error.hpp"
#include "apl/service.hpp"

namespace apl::service {

using nlohmann::json;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::format:
    case ErrorCode::unsupported:
    case ErrorCode::corrupt:
    case ErrorCode::empty_mask:
    case ErrorCode::ambiguous_labels:
    case ErrorCode::segmentation_failed:
    case ErrorCode::undefined_score:
    case ErrorCode::geometry: return 422;
    case ErrorCode::io:
    case ErrorCode::write: return 500;
    default: return 400;
  }
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"code", code}, {"message", message}}.dump(), "application/json");
}

/// Runs a handler, mapping exceptions onto structured error documents.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "validation", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open referenced volume " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> to_bytes(const std::string& s) { return {s.begin(), s.end()}; }

std::optional<double> query_number(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  const std::string v = req.get_param_value(key);
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw Error(ErrorCode::validation, std::string("bad number for ") + key);
  return d;
}

std::int64_t path_slice(const httplib::Request& req) {
  try {
    return std::stoll(req.matches[2].str());
  } catch (const std::exception&) {
    throw Error(ErrorCode::validation, "slice index out of range");
  }
}

/// Accepts newline/space separated wire-form masks or {"masks": [...]}.
std::map<int, RleMask> parse_annotation_body(const std::string& body) {
  std::vector<std::string> items;
  const auto first = body.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && body[first] == '{') {
    const json j = json::parse(body);
    for (const auto& m : j.at("masks")) items.push_back(m.get<std::string>());
  } else {
    std::istringstream in(body);
    for (std::string line; in >> line;) items.push_back(line);
  }
  std::map<int, RleMask> masks;
  for (const auto& item : items) {
    RleMask m;
    try {
      m = parse_wire(item);
    } catch (const Error& e) {
      throw Error(ErrorCode::validation, e.what());
    }
    if (!masks.emplace(m.category, m).second) {
      throw Error(ErrorCode::validation, "category " + std::to_string(m.category) + " submitted twice");
    }
  }
  return masks;
}

}  // namespace

HttpServer::HttpServer(SessionStore& store) : store_(store), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen_after_bind() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

bool HttpServer::is_running() const { return server_->is_running(); }

void HttpServer::install_routes() {
  auto& s = *server_;
  SessionStore& store = store_;

  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not_found" : "http", "no such endpoint");
  });

  s.Post("/sessions", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    std::vector<std::uint8_t> image;
    std::optional<std::vector<std::uint8_t>> mask;
    CreateOptions options;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("image")) throw Error(ErrorCode::validation, "multipart field 'image' is required");
      image = to_bytes(req.get_file_value("image").content);
      if (req.has_file("mask")) mask = to_bytes(req.get_file_value("mask").content);
      if (req.has_file("k")) options.k = std::stoll(req.get_file_value("k").content);
    } else {
      const json j = json::parse(req.body);
      image = read_bytes(j.at("image_path").get<std::string>());
      if (j.contains("mask_path") && !j["mask_path"].is_null()) mask = read_bytes(j["mask_path"].get<std::string>());
      if (j.contains("k")) options.k = j["k"].get<std::int64_t>();
      if (j.contains("side_convention")) {
        options.split.convention = j["side_convention"].get<std::string>() == "ras" ? SideConvention::ras
                                                                                     : SideConvention::lps;
      }
      if (j.contains("binarize_threshold")) options.binarize_threshold = j["binarize_threshold"].get<Label>();
    }
    const Session session = store.create_session(image, mask, options);
    res.status = 201;
    res.set_content(to_json(session), "application/json");
  }));

  s.Get("/sessions", guarded([&store](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"sessions", store.list()}}.dump(), "application/json");
  }));

  s.Get(R"(/sessions/([0-9a-f]+))", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    res.set_content(to_json(store.get(req.matches[1].str())), "application/json");
  }));

  s.Get(R"(/sessions/([0-9a-f]+)/slices)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const Session session = store.get(req.matches[1].str());
    json slices = json::array();
    for (std::int64_t z : session.plan.slices) {
      json item{{"z", z}, {"completed", session.annotations.contains(z)}};
      if (auto it = session.timings.find(z); it != session.timings.end()) {
        item["start_ms"] = it->second.start_ms ? json(*it->second.start_ms) : json(nullptr);
        item["end_ms"] = it->second.end_ms ? json(*it->second.end_ms) : json(nullptr);
      }
      slices.push_back(item);
    }
    res.set_content(json{{"slices", slices},
                         {"completed", session.annotations.size()},
                         {"total", session.plan.slices.size()},
                         {"short_extent", session.plan.short_extent}}
                        .dump(),
                    "application/json");
  }));

  s.Get(R"(/sessions/([0-9a-f]+)/slices/(\d+)/image)",
        guarded([&store](const httplib::Request& req, httplib::Response& res) {
          const auto raster = store.slice_image(req.matches[1].str(), path_slice(req), query_number(req, "wc"),
                                                query_number(req, "ww"));
          const std::string format = req.has_param("format") ? req.get_param_value("format") : "png";
          std::vector<std::uint8_t> bytes;
          std::string type;
          if (format == "pgm") {
            bytes = encode_pgm(raster);
            type = "image/x-portable-graymap";
          } else if (format == "png") {
            bytes = encode_png(raster);
            type = "image/png";
          } else {
            throw Error(ErrorCode::validation, "format must be png or pgm");
          }
          res.set_content(std::string(bytes.begin(), bytes.end()), type);
        }));

  s.Get(R"(/sessions/([0-9a-f]+)/slices/(\d+)/lungmask)",
        guarded([&store](const httplib::Request& req, httplib::Response& res) {
          std::string body;
          for (const auto& m : store.lung_mask_rle(req.matches[1].str(), path_slice(req))) body += to_wire(m) + "\n";
          res.set_content(body, "text/plain");
        }));

  s.Put(R"(/sessions/([0-9a-f]+)/slices/(\d+)/annotation)",
        guarded([&store](const httplib::Request& req, httplib::Response& res) {
          const auto masks = parse_annotation_body(req.body);
          res.set_content(to_json(store.put_annotation(req.matches[1].str(), path_slice(req), masks)),
                          "application/json");
        }));

  s.Post(R"(/sessions/([0-9a-f]+)/finalize)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    FinalizeOptions options;
    if (!req.body.empty()) {
      const json j = json::parse(req.body);
      if (j.contains("cell_edge") && !j["cell_edge"].is_null()) options.cell_edge = j["cell_edge"].get<std::int64_t>();
      if (j.contains("tau")) options.tau = j["tau"].get<double>();
      if (j.contains("clip_to_lung")) options.clip_to_lung = j["clip_to_lung"].get<bool>();
    }
    res.set_content(store.finalize(req.matches[1].str(), options), "application/json");
  }));

  s.Get(R"(/sessions/([0-9a-f]+)/report)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    res.set_content(store.report(req.matches[1].str()), "application/json");
  }));
}

}  // namespace apl::service
