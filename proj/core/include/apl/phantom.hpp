#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "apl/annotation.hpp"
#include "apl/lungmask.hpp"
#include "apl/volume.hpp"

namespace apl::phantom {

/// Portable random stream: std::mt19937_64 (fully specified by the standard)
/// with explicit conversions, so a seed yields the same phantom everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) from the top 53 bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller (cached second variate).
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct Ellipsoid {
  Vec3 centre{};
  Vec3 semi_axes{};
  bool contains(const Vec3& p) const noexcept;
};

enum class LesionShape { tube, blob };

/// All lengths in voxel units.
struct Lesion {
  Category category = Category::bronchiectasis_airway_thickening;
  LesionShape shape = LesionShape::blob;
  Vec3 centre{};
  double radius = 1.0;
  /// Tube length along `orientation`; unused for blobs.
  double length = 0.0;
  Vec3 orientation{0.0, 0.0, 1.0};
};

struct Intensities {
  float air = 0.0F;
  float body = 800.0F;
  float lung = 100.0F;
  float lesion = 450.0F;
};

struct PhantomSpec {
  std::uint64_t seed = 0;
  Index3 dims{64, 64, 48};
  Vec3 spacing{1.5, 1.5, 1.5};
  /// Elliptic body cylinder along the axial axis: (centre x, centre y, semi x, semi y).
  std::array<double, 4> body{32.0, 32.0, 29.0, 24.0};
  /// Index 0 = right lung (smaller x), 1 = left lung.
  std::array<Ellipsoid, 2> lungs{
      Ellipsoid{{20.0, 32.0, 24.0}, {9.0, 14.0, 19.0}},
      Ellipsoid{{44.0, 32.0, 24.0}, {9.0, 14.0, 19.0}},
  };
  std::vector<Lesion> lesions;
  /// Gaussian noise standard deviation as a fraction of (max - min) intensity.
  double noise_sigma = 0.0;
  Intensities intensities{};
  int max_resample_attempts = 200;
};

struct Phantom {
  ImageVolume image;
  LungMask lung_truth;
  LabelVolume annotation_truth;
  /// Annotated voxels per category (index code - 1) after precedence.
  std::array<std::int64_t, 3> true_counts{};
  /// Lesions as placed (centres may differ from the spec after resampling).
  std::vector<Lesion> lesions;
};

/// Throws Error(spec) when a lesion cannot be placed inside the lungs.
Phantom generate(const PhantomSpec& spec);

/// Spec for subject `index` of a cohort: fixed anatomy, the first
/// 2 * (index + 1) lesions of a shared, non-overlapping lesion list.
PhantomSpec cohort_spec(std::size_t index, std::size_t n, std::uint64_t base_seed,
                        double noise_sigma = 0.0);

std::vector<Phantom> cohort(std::size_t n, std::uint64_t base_seed, double noise_sigma = 0.0);

/// Random anatomy and lesion set for property tests; small grids by default.
PhantomSpec random_spec(std::uint64_t seed, Index3 max_dims = {40, 40, 32});

}  // namespace apl::phantom
