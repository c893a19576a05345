#include "apl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "apl/error.hpp"

namespace apl::stats {

namespace {

constexpr int kMaxIterations = 20000;
constexpr double kEpsilon = 1.0e-16;
constexpr double kTiny = 1.0e-300;

double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double x, double p, double q) {
  const double qab = p + q;
  const double qap = p + 1.0;
  const double qam = p - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (q - m) * x / ((qam + m2) * (p + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(p + m) * (qab + m) * x / ((p + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEpsilon) return h;
  }
  throw Error(ErrorCode::domain, "incomplete beta continued fraction did not converge");
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

PairedSample::PairedSample(std::vector<std::string> labels, std::vector<double> a, std::vector<double> b)
    : labels_(std::move(labels)), a_(std::move(a)), b_(std::move(b)) {
  validate();
}

PairedSample::PairedSample(std::vector<double> a, std::vector<double> b) : a_(std::move(a)), b_(std::move(b)) {
  labels_.resize(a_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) labels_[i] = std::to_string(i);
  validate();
}

void PairedSample::validate() const {
  if (a_.size() != b_.size() || labels_.size() != a_.size()) {
    throw Error(ErrorCode::validation, "paired sample vectors differ in length");
  }
  if (a_.size() < 2) throw Error(ErrorCode::validation, "paired sample needs at least two pairs");
  for (std::size_t i = 0; i < a_.size(); ++i) {
    if (!std::isfinite(a_[i]) || !std::isfinite(b_[i])) {
      throw Error(ErrorCode::validation, "paired sample contains a non-finite value");
    }
  }
}

double regularized_incomplete_beta(double x, double p, double q) {
  if (!std::isfinite(x) || !std::isfinite(p) || !std::isfinite(q) || x < 0.0 || x > 1.0 || p <= 0.0 ||
      q <= 0.0) {
    throw Error(ErrorCode::domain, "incomplete beta requires x in [0,1] and p, q > 0");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      log_gamma(p + q) - log_gamma(p) - log_gamma(q) + p * std::log(x) + q * std::log1p(-x);
  const double front = std::exp(log_front);
  double result;
  if (x < (p + 1.0) / (p + q + 2.0)) {
    result = front * beta_continued_fraction(x, p, q) / p;
  } else {
    result = 1.0 - front * beta_continued_fraction(1.0 - x, q, p) / q;
  }
  return std::clamp(result, 0.0, 1.0);
}

double student_t_two_tailed(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::domain, "degrees of freedom must be positive");
  if (std::isnan(t)) throw Error(ErrorCode::domain, "t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
}

TestResult paired_t_test(const PairedSample& s) {
  const std::size_t n = s.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = s.a()[i] - s.b()[i];
  const double md = mean(d);
  double ss = 0.0;
  for (double v : d) ss += (v - md) * (v - md);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  // Differences of a and a + c spread by a few ulps of the operands; treat that as zero variance.
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max({scale, std::fabs(s.a()[i]), std::fabs(s.b()[i])});
  if (!(sd > 16.0 * std::numeric_limits<double>::epsilon() * scale)) {
    throw Error(ErrorCode::degenerate_variance,
                "all paired differences are identical (mean difference " + std::to_string(md) + ")");
  }
  TestResult r;
  r.df = static_cast<double>(n - 1);
  r.statistic = md / (sd / std::sqrt(static_cast<double>(n)));
  r.p_two_tailed = student_t_two_tailed(r.statistic, r.df);
  r.effect = md;
  return r;
}

TestResult pearson(const PairedSample& s) {
  const std::size_t n = s.size();
  if (n < 3) throw Error(ErrorCode::validation, "Pearson correlation needs at least three pairs");
  const double ma = mean(s.a());
  const double mb = mean(s.b());
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = s.a()[i] - ma;
    const double db = s.b()[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) {
    throw Error(ErrorCode::undefined_correlation, "correlation undefined for a constant vector");
  }
  const double r = std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
  TestResult out;
  out.df = static_cast<double>(n - 2);
  out.effect = r;
  const double one_minus = 1.0 - r * r;
  out.statistic = one_minus > 0.0 ? r * std::sqrt(out.df / one_minus)
                                  : std::copysign(std::numeric_limits<double>::infinity(), r);
  out.p_two_tailed = student_t_two_tailed(out.statistic, out.df);
  return out;
}

std::string_view significance_stars(double p) noexcept {
  if (p < 1.0e-4) return "****";
  if (p < 1.0e-3) return "***";
  if (p < 1.0e-2) return "**";
  if (p < 5.0e-2) return "*";
  return "ns";
}

}  // namespace apl::stats
