#include "apl/scoring.hpp"

#include <algorithm>
#include <charconv>

#include <nlohmann/json.hpp>

#include "apl/error.hpp"

namespace apl {

namespace {

/// Annotation lookup per plan slice after validating the caller's inputs.
std::vector<const SliceAnnotation*> index_annotations(const LungMask& mask,
                                                      const std::vector<SliceAnnotation>& annotations,
                                                      const SliceSamplePlan& plan) {
  const VolumeGeometry& g = mask.geometry();
  for (std::int64_t z : plan.slices) {
    if (z < 0 || z >= g.axial_count()) {
      throw Error(ErrorCode::bounds, "plan slice " + std::to_string(z) + " outside the mask volume");
    }
  }
  std::vector<const SliceAnnotation*> by_slice(plan.slices.size(), nullptr);
  for (const SliceAnnotation& a : annotations) {
    const auto it = std::lower_bound(plan.slices.begin(), plan.slices.end(), a.z);
    if (it == plan.slices.end() || *it != a.z) {
      throw Error(ErrorCode::validation, "annotation on slice " + std::to_string(a.z) + " not in the plan");
    }
    if (a.labels.width != g.plane_width() || a.labels.height != g.plane_height()) {
      throw Error(ErrorCode::geometry, "annotation plane dims do not match the volume");
    }
    auto& slot = by_slice[static_cast<std::size_t>(it - plan.slices.begin())];
    if (slot) throw Error(ErrorCode::validation, "duplicate annotation for slice " + std::to_string(a.z));
    for (std::uint8_t v : a.labels.data) {
      if (v > 3) throw Error(ErrorCode::validation, "annotation label outside {0,1,2,3}");
    }
    slot = &a;
  }
  return by_slice;
}

void check_grid_params(const GridParams& p) {
  if (p.cell_edge < 1) throw Error(ErrorCode::parameter, "cell_edge must be >= 1");
  if (!(p.tau > 0.0 && p.tau <= 1.0)) throw Error(ErrorCode::parameter, "tau must lie in (0, 1]");
}

void finish_ratios(ScoreReport& r, std::int64_t denominator) {
  for (int c = 0; c < 3; ++c) {
    r.per_category_ratio[c] =
        static_cast<double>(r.per_category_count[c]) / static_cast<double>(denominator);
  }
  r.total_ratio = r.per_category_ratio[0] + r.per_category_ratio[1] + r.per_category_ratio[2];
}

}  // namespace

std::string_view to_string(ScoreMode mode) noexcept { return mode == ScoreMode::pixel ? "pixel" : "grid"; }

ScoreReport pixel_score(const LungMask& mask, const std::vector<SliceAnnotation>& annotations,
                        const SliceSamplePlan& plan, bool clip_to_lung) {
  const auto by_slice = index_annotations(mask, annotations, plan);
  ScoreReport r;
  r.mode = ScoreMode::pixel;
  r.clip_to_lung = clip_to_lung;
  r.slices_used = plan.slices;
  for (std::size_t s = 0; s < plan.slices.size(); ++s) {
    const Plane<Label> lung = mask.volume().axial_slice(plan.slices[s]);
    const SliceAnnotation* ann = by_slice[s];
    for (std::size_t i = 0; i < lung.data.size(); ++i) {
      const bool in_lung = lung.data[i] != kBackground;
      r.lung_voxels += in_lung;
      if (!ann) continue;
      const std::uint8_t c = ann->labels.data[i];
      if (c != 0 && (in_lung || !clip_to_lung)) ++r.per_category_count[c - 1];
    }
  }
  if (r.lung_voxels == 0) {
    throw Error(ErrorCode::undefined_score, "no lung voxels on the sampled slices");
  }
  r.lung_units = r.lung_voxels;
  finish_ratios(r, r.lung_voxels);
  const double vv = mask.geometry().voxel_volume_mm3();
  r.sampled_lung_volume_mm3 = static_cast<double>(r.lung_voxels) * vv;
  for (int c = 0; c < 3; ++c) r.per_category_volume_mm3[c] = static_cast<double>(r.per_category_count[c]) * vv;
  return r;
}

GridTessellation tessellate(const LungMask& mask, const std::vector<SliceAnnotation>& annotations,
                            const SliceSamplePlan& plan, const GridParams& params) {
  check_grid_params(params);
  const auto by_slice = index_annotations(mask, annotations, plan);
  const VolumeGeometry& g = mask.geometry();
  const std::int64_t w = g.plane_width();
  const std::int64_t h = g.plane_height();
  const std::int64_t e = params.cell_edge;
  GridTessellation t;
  t.cell_edge = e;
  for (std::size_t s = 0; s < plan.slices.size(); ++s) {
    const std::int64_t z = plan.slices[s];
    const Plane<Label> lung = mask.volume().axial_slice(z);
    const SliceAnnotation* ann = by_slice[s];
    for (std::int64_t v0 = 0; v0 < h; v0 += e) {
      for (std::int64_t u0 = 0; u0 < w; u0 += e) {
        GridCell cell;
        cell.u0 = u0;
        cell.v0 = v0;
        cell.z = z;
        int best = 0;
        for (std::int64_t v = v0; v < std::min(v0 + e, h); ++v) {
          for (std::int64_t u = u0; u < std::min(u0 + e, w); ++u) {
            ++cell.total_pixel_count;
            if (lung.at(u, v) == kBackground) continue;
            ++cell.lung_pixel_count;
            const int c = ann ? ann->labels.at(u, v) : 0;
            if (c != 0 && (best == 0 || c < best)) best = c;
          }
        }
        cell.is_lung = static_cast<double>(cell.lung_pixel_count) >=
                       params.tau * static_cast<double>(cell.total_pixel_count);
        cell.assigned_category = cell.is_lung ? best : 0;
        t.cells.push_back(cell);
      }
    }
  }
  return t;
}

ScoreReport grid_score(const LungMask& mask, const std::vector<SliceAnnotation>& annotations,
                       const SliceSamplePlan& plan, const GridParams& params) {
  const GridTessellation t = tessellate(mask, annotations, plan, params);
  ScoreReport r;
  r.mode = ScoreMode::grid;
  r.grid_params = params;
  r.slices_used = plan.slices;
  for (const GridCell& c : t.cells) {
    r.lung_voxels += c.lung_pixel_count;
    if (!c.is_lung) continue;
    ++r.lung_units;
    if (c.assigned_category != 0) ++r.per_category_count[c.assigned_category - 1];
  }
  if (r.lung_units == 0) throw Error(ErrorCode::undefined_score, "no lung cells on the sampled slices");
  finish_ratios(r, r.lung_units);
  r.sampled_lung_volume_mm3 = static_cast<double>(r.lung_voxels) * mask.geometry().voxel_volume_mm3();
  for (int c = 0; c < 3; ++c) r.per_category_volume_mm3[c] = r.per_category_ratio[c] * r.sampled_lung_volume_mm3;
  return r;
}

std::int64_t default_cell_edge(const LungMask& mask, const SliceSamplePlan& plan) {
  std::int64_t longest = 0;
  for (std::int64_t z : plan.slices) {
    if (z < 0 || z >= mask.geometry().axial_count()) continue;
    const Plane<Label> lung = mask.volume().axial_slice(z);
    std::int64_t umin = lung.width, umax = -1, vmin = lung.height, vmax = -1;
    for (std::int64_t v = 0; v < lung.height; ++v) {
      for (std::int64_t u = 0; u < lung.width; ++u) {
        if (lung.at(u, v) == kBackground) continue;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
    }
    if (umax < 0) continue;
    longest = std::max({longest, umax - umin + 1, vmax - vmin + 1});
  }
  // Integer round-half-away-from-zero of longest / 20.
  return std::max<std::int64_t>(1, (longest + 10) / 20);
}

ScorePair compare_scores(const ScoreReport& pixel, const ScoreReport& grid) {
  if (pixel.slices_used != grid.slices_used) {
    throw Error(ErrorCode::pairing, "reports were computed on different slice plans");
  }
  ScorePair p;
  p.pixel_total = pixel.total_ratio;
  p.grid_total = grid.total_ratio;
  for (int c = 0; c < 3; ++c) p.per_category[c] = {pixel.per_category_ratio[c], grid.per_category_ratio[c]};
  return p;
}

std::vector<SliceAnnotation> annotations_from_volume(const LabelVolume& ann, const SliceSamplePlan& plan) {
  std::vector<SliceAnnotation> out;
  out.reserve(plan.slices.size());
  for (std::int64_t z : plan.slices) {
    const Plane<Label> plane = ann.axial_slice(z);
    SliceAnnotation a;
    a.z = z;
    a.labels = LabelPlane(plane.width, plane.height);
    for (std::size_t i = 0; i < plane.data.size(); ++i) {
      if (plane.data[i] > 3) throw Error(ErrorCode::validation, "annotation volume label outside {0,1,2,3}");
      a.labels.data[i] = static_cast<std::uint8_t>(plane.data[i]);
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::string format_number(double value, int precision) {
  std::array<char, 64> buf{};
  const auto res = precision <= 0
                       ? std::to_chars(buf.data(), buf.data() + buf.size(), value)
                       : std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::general,
                                       precision);
  return std::string(buf.data(), res.ptr);
}

std::string score_csv_header() {
  return "subject_id,mode,cat1_ratio,cat2_ratio,cat3_ratio,total_ratio,lung_mm3,cell_edge,tau";
}

std::string to_csv_row(const ScoreReport& r, const std::string& subject_id, int precision) {
  std::string row = subject_id + "," + std::string(to_string(r.mode));
  for (double v : r.per_category_ratio) row += "," + format_number(v, precision);
  row += "," + format_number(r.total_ratio, precision);
  row += "," + format_number(r.sampled_lung_volume_mm3, precision);
  if (r.grid_params) {
    row += "," + std::to_string(r.grid_params->cell_edge) + "," + format_number(r.grid_params->tau, precision);
  } else {
    row += ",,";
  }
  return row;
}

std::string to_json(const ScoreReport& r) {
  nlohmann::json j;
  j["mode"] = to_string(r.mode);
  for (int c = 0; c < 3; ++c) {
    const std::string k = "cat" + std::to_string(c + 1);
    j[k + "_ratio"] = r.per_category_ratio[c];
    j[k + "_volume_mm3"] = r.per_category_volume_mm3[c];
    j[k + "_count"] = r.per_category_count[c];
  }
  j["total_ratio"] = r.total_ratio;
  j["sampled_lung_volume_mm3"] = r.sampled_lung_volume_mm3;
  j["lung_voxels"] = r.lung_voxels;
  j["lung_units"] = r.lung_units;
  j["clip_to_lung"] = r.clip_to_lung;
  j["slices_used"] = r.slices_used;
  if (r.grid_params) {
    j["cell_edge"] = r.grid_params->cell_edge;
    j["tau"] = r.grid_params->tau;
  } else {
    j["cell_edge"] = nullptr;
    j["tau"] = nullptr;
  }
  return j.dump();
}

ScoreReport score_report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_object()) throw Error(ErrorCode::validation, "score report is not a JSON object");
  try {
    ScoreReport r;
    r.mode = j.at("mode").get<std::string>() == "grid" ? ScoreMode::grid : ScoreMode::pixel;
    for (int c = 0; c < 3; ++c) {
      const std::string k = "cat" + std::to_string(c + 1);
      r.per_category_ratio[c] = j.at(k + "_ratio").get<double>();
      r.per_category_volume_mm3[c] = j.at(k + "_volume_mm3").get<double>();
      r.per_category_count[c] = j.at(k + "_count").get<std::int64_t>();
    }
    r.total_ratio = j.at("total_ratio").get<double>();
    r.sampled_lung_volume_mm3 = j.at("sampled_lung_volume_mm3").get<double>();
    r.lung_voxels = j.at("lung_voxels").get<std::int64_t>();
    r.lung_units = j.at("lung_units").get<std::int64_t>();
    r.clip_to_lung = j.at("clip_to_lung").get<bool>();
    r.slices_used = j.at("slices_used").get<std::vector<std::int64_t>>();
    if (!j.at("cell_edge").is_null()) {
      r.grid_params = GridParams{j.at("cell_edge").get<std::int64_t>(), j.at("tau").get<double>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("score report: ") + e.what());
  }
}

}  // namespace apl
