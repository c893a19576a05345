#include "apl/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "apl/error.hpp"

namespace apl::phantom {

namespace {

constexpr std::uint64_t kNoiseStream = 0x9E3779B97F4A7C15ULL;

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(n > 0.0)) throw Error(ErrorCode::spec, "tube orientation must be non-zero");
  return {v[0] / n, v[1] / n, v[2] / n};
}

VolumeGeometry geometry_of(const PhantomSpec& spec) {
  VolumeGeometry g;
  g.dims = spec.dims;
  g.spacing = spec.spacing;
  g.affine = diagonal_affine(spec.spacing);
  g.validate();
  return g;
}

std::vector<Label> lung_labels(const PhantomSpec& spec, const VolumeGeometry& g) {
  std::vector<Label> labels(g.voxel_count(), kBackground);
  std::size_t i = 0;
  for (std::int64_t z = 0; z < g.dims[2]; ++z) {
    for (std::int64_t y = 0; y < g.dims[1]; ++y) {
      for (std::int64_t x = 0; x < g.dims[0]; ++x, ++i) {
        const Vec3 p{static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)};
        if (spec.lungs[0].contains(p)) labels[i] = kRightLung;
        else if (spec.lungs[1].contains(p)) labels[i] = kLeftLung;
      }
    }
  }
  return labels;
}

/// Linear indices of the voxels covered by a lesion (voxel centres, voxel units).
std::vector<std::size_t> rasterize(const VolumeGeometry& g, const Lesion& lesion) {
  std::vector<std::size_t> out;
  const Vec3& c = lesion.centre;
  double reach = lesion.radius;
  Vec3 axis{0.0, 0.0, 1.0};
  if (lesion.shape == LesionShape::tube) {
    axis = normalized(lesion.orientation);
    reach = std::hypot(lesion.radius, lesion.length / 2.0);
  }
  Index3 lo{};
  Index3 hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(c[a] - reach)));
    hi[a] = std::min<std::int64_t>(g.dims[a] - 1, static_cast<std::int64_t>(std::ceil(c[a] + reach)));
  }
  const double r2 = lesion.radius * lesion.radius;
  for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
    for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
      for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
        const Vec3 d{x - c[0], y - c[1], z - c[2]};
        bool inside = false;
        if (lesion.shape == LesionShape::blob) {
          inside = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= r2;
        } else {
          const double t = d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2];
          const Vec3 perp{d[0] - t * axis[0], d[1] - t * axis[1], d[2] - t * axis[2]};
          inside = std::fabs(t) <= lesion.length / 2.0 &&
                   perp[0] * perp[0] + perp[1] * perp[1] + perp[2] * perp[2] <= r2;
        }
        if (inside) out.push_back(g.linear_index({x, y, z}));
      }
    }
  }
  return out;
}

bool fits(const std::vector<std::size_t>& voxels, const std::vector<Label>& lungs,
          const std::vector<std::uint8_t>* occupied) {
  if (voxels.empty()) return false;
  for (std::size_t i : voxels) {
    if (lungs[i] == kBackground) return false;
    if (occupied && (*occupied)[i]) return false;
  }
  return true;
}

Vec3 random_point_in(Rng& rng, const Ellipsoid& e) {
  while (true) {
    const Vec3 u{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    if (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] <= 1.0) {
      return {e.centre[0] + u[0] * e.semi_axes[0], e.centre[1] + u[1] * e.semi_axes[1],
              e.centre[2] + u[2] * e.semi_axes[2]};
    }
  }
}

/// Places `lesion` inside the lungs, resampling its centre when it does not fit.
std::vector<std::size_t> place(Rng& rng, const PhantomSpec& spec, const VolumeGeometry& g,
                               const std::vector<Label>& lungs, const std::vector<std::uint8_t>* occupied,
                               Lesion& lesion) {
  auto voxels = rasterize(g, lesion);
  for (int attempt = 0; !fits(voxels, lungs, occupied); ++attempt) {
    if (attempt >= spec.max_resample_attempts) {
      throw Error(ErrorCode::spec, "lesion could not be placed inside the lungs");
    }
    lesion.centre = random_point_in(rng, spec.lungs[static_cast<std::size_t>(rng.uniform_int(0, 1))]);
    voxels = rasterize(g, lesion);
  }
  return voxels;
}

void validate(const PhantomSpec& spec) {
  for (const auto& lung : spec.lungs) {
    for (double s : lung.semi_axes) {
      if (!(s > 0.0)) throw Error(ErrorCode::spec, "lung semi-axes must be positive");
    }
  }
  if (!(spec.body[2] > 0.0) || !(spec.body[3] > 0.0)) throw Error(ErrorCode::spec, "body semi-axes must be positive");
  if (!(spec.noise_sigma >= 0.0)) throw Error(ErrorCode::spec, "noise_sigma must be non-negative");
  for (const Lesion& l : spec.lesions) {
    if (!(l.radius > 0.0)) throw Error(ErrorCode::spec, "lesion radius must be positive");
    if (l.shape == LesionShape::tube && !(l.length > 0.0)) throw Error(ErrorCode::spec, "tube length must be positive");
  }
}

}  // namespace

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
  if (range == 0) return static_cast<std::int64_t>(engine_());
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return lo + static_cast<std::int64_t>(v % range);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return mag * std::cos(2.0 * std::numbers::pi * u2);
}

bool Ellipsoid::contains(const Vec3& p) const noexcept {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = (p[a] - centre[a]) / semi_axes[a];
    s += d * d;
  }
  return s <= 1.0;
}

Phantom generate(const PhantomSpec& spec) {
  validate(spec);
  const VolumeGeometry g = geometry_of(spec);
  std::vector<Label> lungs = lung_labels(spec, g);

  Rng rng(spec.seed);
  std::vector<Lesion> placed = spec.lesions;
  std::vector<std::uint8_t> ann(lungs.size(), 0);
  for (Lesion& lesion : placed) {
    const auto voxels = place(rng, spec, g, lungs, nullptr, lesion);
    const auto c = static_cast<std::uint8_t>(code(lesion.category));
    for (std::size_t i : voxels) {
      if (ann[i] == 0 || c < ann[i]) ann[i] = c;
    }
  }

  const Intensities& in = spec.intensities;
  std::vector<float> samples(lungs.size(), in.air);
  std::size_t i = 0;
  for (std::int64_t z = 0; z < g.dims[2]; ++z) {
    for (std::int64_t y = 0; y < g.dims[1]; ++y) {
      for (std::int64_t x = 0; x < g.dims[0]; ++x, ++i) {
        const double dx = (x - spec.body[0]) / spec.body[2];
        const double dy = (y - spec.body[1]) / spec.body[3];
        if (dx * dx + dy * dy <= 1.0) samples[i] = in.body;
        if (lungs[i] != kBackground) samples[i] = in.lung;
        if (ann[i] != 0) samples[i] = in.lesion;
      }
    }
  }
  if (spec.noise_sigma > 0.0) {
    const auto [lo, hi] = std::minmax({in.air, in.body, in.lung, in.lesion});
    const double sigma = spec.noise_sigma * static_cast<double>(hi - lo);
    Rng noise(spec.seed ^ kNoiseStream);
    for (float& s : samples) s = static_cast<float>(s + sigma * noise.normal());
  }

  Phantom out{
      ImageVolume(g, std::move(samples)),
      LungMask(LabelVolume(g, std::move(lungs), lung_palette()), MaskSource::manual),
      LabelVolume(g, std::vector<Label>(ann.begin(), ann.end()), annotation_palette()),
      {},
      std::move(placed),
  };
  for (std::uint8_t c : ann) {
    if (c != 0) ++out.true_counts[c - 1];
  }
  return out;
}

PhantomSpec cohort_spec(std::size_t index, std::size_t n, std::uint64_t base_seed, double noise_sigma) {
  if (n < 2) throw Error(ErrorCode::spec, "a cohort needs at least two subjects");
  if (index >= n) throw Error(ErrorCode::spec, "cohort index out of range");
  PhantomSpec base;
  base.seed = base_seed;
  const VolumeGeometry g = geometry_of(base);
  const std::vector<Label> lungs = lung_labels(base, g);

  // Shared master list: subject i receives the first 2 (i + 1) lesions, so
  // burden is nested and strictly increasing.
  Rng rng(base_seed);
  std::vector<std::uint8_t> occupied(lungs.size(), 0);
  std::vector<Lesion> master;
  const std::size_t total = 2 * n;
  for (std::size_t j = 0; j < total; ++j) {
    Lesion l;
    l.category = kCategories[j % 3];
    l.shape = (j % 2 == 0) ? LesionShape::tube : LesionShape::blob;
    l.radius = l.shape == LesionShape::tube ? rng.uniform(1.2, 1.8) : rng.uniform(1.8, 3.0);
    l.length = l.shape == LesionShape::tube ? 10.0 : 0.0;
    l.orientation = {rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), 1.0};
    l.centre = random_point_in(rng, base.lungs[j % 2]);
    PhantomSpec attempts = base;
    attempts.max_resample_attempts = 5000;
    for (std::size_t v : place(rng, attempts, g, lungs, &occupied, l)) occupied[v] = 1;
    master.push_back(l);
  }

  PhantomSpec spec = base;
  spec.seed = base_seed + 1000003ULL * (index + 1);
  spec.noise_sigma = noise_sigma;
  spec.lesions.assign(master.begin(), master.begin() + static_cast<std::ptrdiff_t>(2 * (index + 1)));
  return spec;
}

std::vector<Phantom> cohort(std::size_t n, std::uint64_t base_seed, double noise_sigma) {
  std::vector<Phantom> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate(cohort_spec(i, n, base_seed, noise_sigma)));
  return out;
}

PhantomSpec random_spec(std::uint64_t seed, Index3 max_dims) {
  Rng rng(seed);
  PhantomSpec s;
  s.seed = seed;
  for (int a = 0; a < 3; ++a) s.dims[a] = rng.uniform_int(std::max<std::int64_t>(8, max_dims[a] / 2), max_dims[a]);
  const double spacings[] = {1.1, 1.5};
  const double iso = spacings[rng.uniform_int(0, 1)];
  s.spacing = {iso, iso, rng.uniform_int(0, 3) == 0 ? 3.0 : iso};
  const double nx = static_cast<double>(s.dims[0]);
  const double ny = static_cast<double>(s.dims[1]);
  const double nz = static_cast<double>(s.dims[2]);
  s.body = {(nx - 1) / 2.0, (ny - 1) / 2.0, 0.46 * nx, 0.42 * ny};
  for (int side = 0; side < 2; ++side) {
    Ellipsoid& e = s.lungs[static_cast<std::size_t>(side)];
    const double cx = side == 0 ? rng.uniform(0.28, 0.32) : rng.uniform(0.68, 0.72);
    e.centre = {cx * (nx - 1), rng.uniform(0.45, 0.55) * (ny - 1), rng.uniform(0.45, 0.55) * (nz - 1)};
    e.semi_axes = {rng.uniform(0.11, 0.15) * nx, rng.uniform(0.18, 0.25) * ny, rng.uniform(0.25, 0.4) * nz};
    for (double& a : e.semi_axes) a = std::max(a, 1.5);
  }
  const auto n_lesions = rng.uniform_int(0, 6);
  for (std::int64_t j = 0; j < n_lesions; ++j) {
    Lesion l;
    l.category = kCategories[static_cast<std::size_t>(rng.uniform_int(0, 2))];
    l.shape = rng.uniform_int(0, 1) == 0 ? LesionShape::blob : LesionShape::tube;
    l.radius = rng.uniform(0.6, 2.0);
    l.length = l.shape == LesionShape::tube ? rng.uniform(2.0, 6.0) : 0.0;
    l.orientation = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.2, 1.0)};
    l.centre = s.lungs[static_cast<std::size_t>(rng.uniform_int(0, 1))].centre;
    s.lesions.push_back(l);
  }
  s.max_resample_attempts = 500;
  return s;
}

}  // namespace apl::phantom
