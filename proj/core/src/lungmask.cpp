#include "apl/lungmask.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "apl/error.hpp"
#include "apl/nifti.hpp"
#include "apl/scoring.hpp"

namespace apl {

namespace {

using Mask = std::vector<std::uint8_t>;

constexpr double kMinLungPieceFraction = 0.1;
constexpr int kMaxSeparationErosions = 10;

template <typename Visit>
void for_each_neighbour(const Index3& d, std::size_t idx, Visit&& visit) {
  const auto nx = static_cast<std::size_t>(d[0]);
  const auto nxy = nx * static_cast<std::size_t>(d[1]);
  const auto x = static_cast<std::int64_t>(idx % nx);
  const auto y = static_cast<std::int64_t>((idx / nx) % static_cast<std::size_t>(d[1]));
  const auto z = static_cast<std::int64_t>(idx / nxy);
  if (x > 0) visit(idx - 1);
  if (x + 1 < d[0]) visit(idx + 1);
  if (y > 0) visit(idx - nx);
  if (y + 1 < d[1]) visit(idx + nx);
  if (z > 0) visit(idx - nxy);
  if (z + 1 < d[2]) visit(idx + nxy);
}

/// Components sorted by size (descending), ties broken by first voxel index.
std::vector<std::int32_t> ranked_components(const Components& c) {
  std::vector<std::int32_t> order(c.sizes.size());
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int32_t a, std::int32_t b) { return c.sizes[a - 1] > c.sizes[b - 1]; });
  return order;
}

/// 6-neighbour dilation; out-of-volume voxels count as background.
Mask dilate(const Index3& d, const Mask& in) {
  Mask out = in;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!in[i]) continue;
    for_each_neighbour(d, i, [&](std::size_t j) { out[j] = 1; });
  }
  return out;
}

/// 6-neighbour erosion; out-of-volume voxels count as foreground.
Mask erode(const Index3& d, const Mask& in) {
  Mask out = in;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!in[i]) continue;
    bool keep = true;
    for_each_neighbour(d, i, [&](std::size_t j) { keep = keep && in[j]; });
    out[i] = keep ? 1 : 0;
  }
  return out;
}

/// Sets every pixel of each axial plane that is not reachable from the plane
/// border through unset pixels.
void fill_holes_per_slice(const VolumeGeometry& g, Mask& mask) {
  const std::int64_t w = g.plane_width();
  const std::int64_t h = g.plane_height();
  std::vector<std::uint8_t> outside(static_cast<std::size_t>(w * h));
  std::vector<std::int64_t> stack;
  for (std::int64_t z = 0; z < g.axial_count(); ++z) {
    auto vox = [&](std::int64_t u, std::int64_t v) { return g.linear_index(g.plane_voxel(z, u, v)); };
    std::fill(outside.begin(), outside.end(), 0);
    stack.clear();
    auto seed = [&](std::int64_t u, std::int64_t v) {
      const auto p = static_cast<std::size_t>(u + w * v);
      if (!outside[p] && !mask[vox(u, v)]) {
        outside[p] = 1;
        stack.push_back(u + w * v);
      }
    };
    for (std::int64_t u = 0; u < w; ++u) {
      seed(u, 0);
      seed(u, h - 1);
    }
    for (std::int64_t v = 0; v < h; ++v) {
      seed(0, v);
      seed(w - 1, v);
    }
    while (!stack.empty()) {
      const std::int64_t p = stack.back();
      stack.pop_back();
      const std::int64_t u = p % w;
      const std::int64_t v = p / w;
      if (u > 0) seed(u - 1, v);
      if (u + 1 < w) seed(u + 1, v);
      if (v > 0) seed(u, v - 1);
      if (v + 1 < h) seed(u, v + 1);
    }
    for (std::int64_t v = 0; v < h; ++v) {
      for (std::int64_t u = 0; u < w; ++u) {
        if (!outside[static_cast<std::size_t>(u + w * v)]) mask[vox(u, v)] = 1;
      }
    }
  }
}

Vec3 component_centroid(const VolumeGeometry& g, const Components& c, std::int32_t id) {
  Vec3 sum{};
  const auto nx = static_cast<std::size_t>(g.dims[0]);
  const auto ny = static_cast<std::size_t>(g.dims[1]);
  for (std::size_t i = 0; i < c.ids.size(); ++i) {
    if (c.ids[i] != id) continue;
    sum[0] += static_cast<double>(i % nx);
    sum[1] += static_cast<double>((i / nx) % ny);
    sum[2] += static_cast<double>(i / (nx * ny));
  }
  const auto n = static_cast<double>(c.sizes[id - 1]);
  return {sum[0] / n, sum[1] / n, sum[2] / n};
}

/// Erodes a single component until it falls apart into two pieces of at least
/// kMinLungPieceFraction of its size, then regrows both pieces inside the
/// component by simultaneous breadth-first search. Remaining voxels go to the
/// nearer piece along paths inside the component.
std::optional<Components> separate_joined(const VolumeGeometry& g, const Mask& component, std::int64_t size) {
  Mask core = component;
  for (int iter = 0; iter < kMaxSeparationErosions; ++iter) {
    core = erode(g.dims, core);
    const Components c = connected_components(g, core);
    if (c.sizes.empty()) return std::nullopt;
    if (c.sizes.size() < 2) continue;
    const auto ranked = ranked_components(c);
    const double min_piece = kMinLungPieceFraction * static_cast<double>(size);
    if (static_cast<double>(c.sizes[ranked[1] - 1]) < min_piece) continue;

    Components out;
    out.ids.assign(component.size(), 0);
    out.sizes = {0, 0};
    std::vector<std::size_t> frontier;
    for (std::size_t i = 0; i < component.size(); ++i) {
      const std::int32_t piece = c.ids[i] == ranked[0] ? 1 : c.ids[i] == ranked[1] ? 2 : 0;
      if (piece == 0) continue;
      out.ids[i] = piece;
      ++out.sizes[piece - 1];
      frontier.push_back(i);
    }
    std::vector<std::size_t> next;
    while (!frontier.empty()) {
      next.clear();
      for (std::size_t i : frontier) {
        for_each_neighbour(g.dims, i, [&](std::size_t j) {
          if (component[j] && out.ids[j] == 0) {
            out.ids[j] = out.ids[i];
            ++out.sizes[out.ids[i] - 1];
            next.push_back(j);
          }
        });
      }
      frontier.swap(next);
    }
    return out;
  }
  return std::nullopt;
}

std::string case_id_of(const std::filesystem::path& p) {
  std::string name = p.filename().string();
  for (const char* suffix : {".nii.gz", ".nii"}) {
    const std::string s(suffix);
    if (name.size() > s.size() && name.ends_with(s)) return name.substr(0, name.size() - s.size());
  }
  return name;
}

}  // namespace

std::string_view to_string(MaskSource source) noexcept {
  switch (source) {
    case MaskSource::external_file: return "external_file";
    case MaskSource::fallback_segmenter: return "fallback_segmenter";
    case MaskSource::manual: return "manual";
  }
  return "external_file";
}

Palette lung_palette() {
  return {{kBackground, "background"}, {kRightLung, "right_lung"}, {kLeftLung, "left_lung"}};
}

LungMask::LungMask(LabelVolume volume, MaskSource source, std::vector<std::string> warnings)
    : volume_(std::move(volume)), source_(source), warnings_(std::move(warnings)) {
  for (Label l : volume_.labels()) {
    if (l > kLeftLung) throw Error(ErrorCode::validation, "lung mask labels must be within {0,1,2}");
    ++counts_[l];
  }
  if (lung_voxels() == 0) throw Error(ErrorCode::empty_mask, "lung mask has no foreground voxels");
}

Components connected_components(const VolumeGeometry& geometry, const Mask& mask) {
  Components c;
  c.ids.assign(mask.size(), 0);
  std::vector<std::size_t> queue;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || c.ids[start] != 0) continue;
    const auto id = static_cast<std::int32_t>(c.sizes.size() + 1);
    std::int64_t size = 0;
    queue.clear();
    queue.push_back(start);
    c.ids[start] = id;
    while (!queue.empty()) {
      const std::size_t i = queue.back();
      queue.pop_back();
      ++size;
      for_each_neighbour(geometry.dims, i, [&](std::size_t j) {
        if (mask[j] && c.ids[j] == 0) {
          c.ids[j] = id;
          queue.push_back(j);
        }
      });
    }
    c.sizes.push_back(size);
  }
  return c;
}

std::optional<float> otsu_threshold(const std::vector<float>& samples) {
  if (samples.empty()) return std::nullopt;
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) return std::nullopt;
  constexpr int kBins = 256;
  std::array<double, kBins> hist{};
  const double scale = kBins / (hi - lo);
  for (float s : samples) {
    const int b = std::min(kBins - 1, static_cast<int>((s - lo) * scale));
    hist[b] += 1.0;
  }
  const double total = static_cast<double>(samples.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];
  double w0 = 0.0;
  double sum0 = 0.0;
  double best = -1.0;
  int best_bin = 0;
  for (int b = 0; b < kBins - 1; ++b) {
    w0 += hist[b];
    sum0 += b * hist[b];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_bin = b;
    }
  }
  // Upper edge of the last bin in the dark class.
  return static_cast<float>(lo + (best_bin + 1) / scale);
}

LungMask split_left_right(const LabelVolume& binary_mask, const SplitOptions& options, MaskSource source) {
  const VolumeGeometry& g = binary_mask.geometry();
  Mask fg(binary_mask.labels().size());
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = binary_mask.labels()[i] != 0 ? 1 : 0;
  Components comps = connected_components(g, fg);
  if (comps.sizes.empty()) throw Error(ErrorCode::empty_mask, "mask has no foreground voxels");

  auto ranked = ranked_components(comps);
  std::vector<std::string> warnings;
  std::size_t discarded = ranked.size() > 2 ? ranked.size() - 2 : 0;
  const bool lone = ranked.size() < 2 ||
                    static_cast<double>(comps.sizes[ranked[1] - 1]) <
                        kMinLungPieceFraction * static_cast<double>(comps.sizes[ranked[0] - 1]);
  if (lone) {
    Mask main(fg.size());
    for (std::size_t i = 0; i < fg.size(); ++i) main[i] = comps.ids[i] == ranked[0] ? 1 : 0;
    if (auto pieces = separate_joined(g, main, comps.sizes[ranked[0] - 1])) {
      warnings.emplace_back("lungs joined in one component; separated by erosion");
      discarded = ranked.size() - 1;
      comps = std::move(*pieces);
      ranked = {1, 2};
    }
  }

  std::vector<Label> labels(fg.size(), kBackground);
  if (ranked.size() < 2) {
    warnings.emplace_back("degenerate anatomy: only one lung component found; kept as label 1");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (comps.ids[i] == ranked[0]) labels[i] = kRightLung;
    }
  } else {
    const double xa = g.to_physical(component_centroid(g, comps, ranked[0]))[0];
    const double xb = g.to_physical(component_centroid(g, comps, ranked[1]))[0];
    const bool a_is_right = options.convention == SideConvention::lps ? xa <= xb : xa >= xb;
    const std::int32_t right = a_is_right ? ranked[0] : ranked[1];
    const std::int32_t left = a_is_right ? ranked[1] : ranked[0];
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (comps.ids[i] == right) labels[i] = kRightLung;
      else if (comps.ids[i] == left) labels[i] = kLeftLung;
    }
  }
  if (discarded > 0) warnings.emplace_back("discarded " + std::to_string(discarded) + " minor component(s)");
  return LungMask(LabelVolume(g, std::move(labels), lung_palette()), source, std::move(warnings));
}

LungMask ingest_mask(const LabelVolume& vol, std::optional<Label> binarize_threshold,
                     const SplitOptions& options, MaskSource source) {
  std::set<Label> present;
  for (Label l : vol.labels()) {
    if (l != 0) present.insert(l);
  }
  if (present.empty()) throw Error(ErrorCode::empty_mask, "mask has no foreground voxels");

  if (binarize_threshold) {
    std::vector<Label> bin(vol.labels().size());
    for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = vol.labels()[i] >= *binarize_threshold ? 1 : 0;
    return split_left_right(LabelVolume(vol.geometry(), std::move(bin)), options, source);
  }
  if (present.size() == 1) {
    return split_left_right(vol, options, source);
  }
  if (present == std::set<Label>{kRightLung, kLeftLung}) {
    return LungMask(LabelVolume(vol.geometry(), vol.labels(), lung_palette()), source);
  }
  std::ostringstream msg;
  msg << "cannot map foreground labels {";
  for (auto it = present.begin(); it != present.end(); ++it) msg << (it == present.begin() ? "" : ",") << *it;
  msg << "} onto right/left lung without a binarize threshold";
  throw Error(ErrorCode::ambiguous_labels, msg.str());
}

LungMask fallback_segment(const ImageVolume& img, const SplitOptions& options) {
  const VolumeGeometry& g = img.geometry();
  const auto& s = img.samples();
  const auto t_body = otsu_threshold(s);
  if (!t_body) throw Error(ErrorCode::segmentation_failed, "image is constant; no body to segment");

  Mask bright(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) bright[i] = s[i] > *t_body ? 1 : 0;
  const Components bc = connected_components(g, bright);
  if (bc.sizes.empty()) throw Error(ErrorCode::segmentation_failed, "no bright body component");
  const std::int32_t body_id = ranked_components(bc)[0];
  Mask body(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) body[i] = bc.ids[i] == body_id ? 1 : 0;
  fill_holes_per_slice(g, body);

  std::vector<float> inside;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (body[i]) inside.push_back(s[i]);
  }
  const auto t_lung = otsu_threshold(inside);
  if (!t_lung) throw Error(ErrorCode::segmentation_failed, "body interior is uniform; no dark parenchyma");

  Mask dark(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) dark[i] = (body[i] && s[i] <= *t_lung) ? 1 : 0;
  dark = erode(g.dims, dilate(g.dims, dark));
  for (std::size_t i = 0; i < s.size(); ++i) dark[i] = dark[i] && body[i];

  const Components dc = connected_components(g, dark);
  if (dc.sizes.empty()) throw Error(ErrorCode::segmentation_failed, "no candidate lung components");
  const auto ranked = ranked_components(dc);
  std::vector<Label> keep(s.size(), 0);
  const std::size_t n_keep = std::min<std::size_t>(2, ranked.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t r = 0; r < n_keep; ++r) {
      if (dc.ids[i] == ranked[r]) keep[i] = 1;
    }
  }
  return split_left_right(LabelVolume(g, std::move(keep)), options, MaskSource::fallback_segmenter);
}

double dice_score(const LabelVolume& a, const LabelVolume& b, LabelSelector selector) {
  if (!a.geometry().same_grid(b.geometry())) {
    throw Error(ErrorCode::geometry, "dice: volume dimensions differ");
  }
  std::int64_t na = 0;
  std::int64_t nb = 0;
  std::int64_t both = 0;
  const auto& la = a.labels();
  const auto& lb = b.labels();
  for (std::size_t i = 0; i < la.size(); ++i) {
    const bool in_a = selector.matches(la[i]);
    const bool in_b = selector.matches(lb[i]);
    na += in_a;
    nb += in_b;
    both += in_a && in_b;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

DiceTable evaluate_masks(const std::vector<std::filesystem::path>& pred_paths,
                         const std::vector<std::filesystem::path>& gt_paths) {
  if (pred_paths.size() != gt_paths.size()) {
    throw Error(ErrorCode::parameter, "prediction and ground-truth lists differ in length");
  }
  auto evaluate_one = [&](std::size_t i) {
    DiceRow row;
    row.case_id = case_id_of(pred_paths[i]);
    try {
      const LabelVolume pred = nifti::read_labels(pred_paths[i]);
      const LabelVolume gt = nifti::read_labels(gt_paths[i]);
      row.right = dice_score(pred, gt, LabelSelector::of(kRightLung));
      row.left = dice_score(pred, gt, LabelSelector::of(kLeftLung));
      row.foreground = dice_score(pred, gt, LabelSelector::foreground());
      row.mean = (row.right + row.left) / 2.0;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  DiceTable table;
  table.rows.resize(pred_paths.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < table.rows.size(); i = next++) table.rows[i] = evaluate_one(i);
  };
  const std::size_t n_workers =
      std::min<std::size_t>(std::max(1U, std::thread::hardware_concurrency()), table.rows.size());
  std::vector<std::future<void>> workers;
  for (std::size_t w = 0; w < n_workers; ++w) workers.push_back(std::async(std::launch::async, worker));
  for (auto& f : workers) f.get();
  double fg = 0.0;
  double means = 0.0;
  for (const auto& row : table.rows) {
    if (row.error) continue;
    fg += row.foreground;
    means += row.mean;
    ++table.ok_rows;
  }
  if (table.ok_rows > 0) {
    table.mean_foreground = fg / static_cast<double>(table.ok_rows);
    table.mean_of_means = means / static_cast<double>(table.ok_rows);
  }
  return table;
}

std::string to_csv(const DiceTable& table, int precision) {
  std::string out = "case_id,label,dice\n";
  auto line = [&](const std::string& id, const char* label, const std::string& value) {
    out += id + "," + label + "," + value + "\n";
  };
  for (const auto& row : table.rows) {
    if (row.error) {
      line(row.case_id, "error", "nan");
      continue;
    }
    line(row.case_id, "1", format_number(row.right, precision));
    line(row.case_id, "2", format_number(row.left, precision));
    line(row.case_id, "foreground", format_number(row.foreground, precision));
    line(row.case_id, "mean", format_number(row.mean, precision));
  }
  if (table.ok_rows > 0) {
    line("mean", "foreground", format_number(table.mean_foreground, precision));
    line("mean", "mean", format_number(table.mean_of_means, precision));
  }
  return out;
}

}  // namespace apl
