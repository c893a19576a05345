#include <doctest.h>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/statistics/bivariate_statistics.hpp>
#include <boost/math/statistics/t_test.hpp>

#include <cmath>
#include <random>

#include "apl/error.hpp"
#include "apl/stats.hpp"

using namespace apl;
using namespace apl::stats;

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

double quadrature_beta(double x, double p, double q) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  auto f = [p, q](double t) { return std::pow(t, p - 1.0) * std::pow(1.0 - t, q - 1.0); };
  return integrator.integrate(f, 0.0, x) / std::beta(p, q);
}

double oracle_t_p(double t, double df) {
  const boost::math::students_t_distribution<double> dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

}  // namespace

TEST_CASE("paired t-test reference values") {
  const PairedSample s({2, 4, 6, 8, 10}, {1, 2, 3, 4, 5});
  const TestResult r = paired_t_test(s);
  // scipy.stats.ttest_rel on d = (1, 2, 3, 4, 5).
  CHECK(std::fabs(r.statistic - 4.242640687119285) < 1e-12);
  CHECK(r.df == 4.0);
  CHECK(std::fabs(r.p_two_tailed - 0.013235599563682695) < 1e-12);
  CHECK(r.effect == 3.0);
}

TEST_CASE("paired t-test degenerate variance") {
  try {
    paired_t_test(PairedSample({1, 2, 3}, {1, 2, 3}));
    FAIL("expected degenerate variance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::degenerate_variance);
    CHECK(std::string(e.what()).find("mean difference 0") != std::string::npos);
  }
  std::vector<double> a{0.1, 0.7, 1.3, 2.9, 10.1};
  std::vector<double> b;
  for (double v : a) b.push_back(v + 0.3);
  CHECK(error_of([&] { paired_t_test(PairedSample(a, b)); }) == ErrorCode::degenerate_variance);
}

TEST_CASE("pearson reference values") {
  const TestResult r = pearson(PairedSample({1, 2, 3}, {1, 2, 4}));
  // scipy.stats.pearsonr((1, 2, 3), (1, 2, 4)).
  CHECK(std::fabs(r.effect - 0.9819805060619655) < 1e-12);
  CHECK(std::fabs(r.p_two_tailed - 0.12103771832367739) < 1e-12);
  CHECK(r.df == 1.0);
}

TEST_CASE("pearson affine and sign cases") {
  std::vector<double> a{0.5, 1.5, 2.0, 7.0, 9.25, 11.0};
  std::vector<double> b;
  std::vector<double> neg;
  for (double v : a) {
    b.push_back(2.0 * v + 1.0);
    neg.push_back(-v);
  }
  const TestResult r = pearson(PairedSample(a, b));
  CHECK(std::fabs(r.effect - 1.0) < 1e-12);
  CHECK(r.p_two_tailed < 1e-12);
  CHECK(std::fabs(pearson(PairedSample(a, neg)).effect + 1.0) < 1e-12);
  CHECK(error_of([&] { pearson(PairedSample(a, std::vector<double>(a.size(), 3.0))); }) ==
        ErrorCode::undefined_correlation);
  CHECK(error_of([&] { pearson(PairedSample({1, 2}, {2, 1})); }) == ErrorCode::validation);
}

TEST_CASE("paired sample validation") {
  CHECK(error_of([] { PairedSample({1, 2}, {1}); }) == ErrorCode::validation);
  CHECK(error_of([] { PairedSample({1}, {1}); }) == ErrorCode::validation);
  CHECK(error_of([] { PairedSample({1, NAN}, {1, 2}); }) == ErrorCode::validation);
  CHECK(error_of([] { PairedSample({"a"}, {1, 2}, {1, 2}); }) == ErrorCode::validation);
}

TEST_CASE("50 fixed vectors agree with Boost.Math") {
  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int v = 0; v < 50; ++v) {
    const std::size_t n = 3 + static_cast<std::size_t>(v % 25);
    std::vector<double> a(n);
    std::vector<double> b(n);
    const double shift = 0.05 * (v - 25);
    const double slope = 0.1 * (v % 11) - 0.4;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = 10.0 + 3.0 * noise(rng);
      b[i] = slope * a[i] + shift + noise(rng);
    }
    CAPTURE(v);
    const PairedSample s(a, b);

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const auto [t_ref, p_ref] = boost::math::statistics::one_sample_t_test(d, 0.0);
    const TestResult t = paired_t_test(s);
    CHECK(std::fabs(t.statistic - t_ref) <= 1e-9 * std::max(1.0, std::fabs(t_ref)));
    CHECK(std::fabs(t.p_two_tailed - p_ref) <= 1e-8);

    const double r_ref = boost::math::statistics::correlation_coefficient(a, b);
    const double df = static_cast<double>(n - 2);
    const double tr_ref = r_ref * std::sqrt(df / (1.0 - r_ref * r_ref));
    const TestResult c = pearson(s);
    CHECK(std::fabs(c.effect - r_ref) <= 1e-9);
    CHECK(std::fabs(c.statistic - tr_ref) <= 1e-9 * std::max(1.0, std::fabs(tr_ref)));
    CHECK(std::fabs(c.p_two_tailed - oracle_t_p(tr_ref, df)) <= 1e-8);
  }
}

TEST_CASE("pearson r is invariant under positive affine maps") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(12);
    std::vector<double> b(12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = u(rng);
      b[i] = a[i] + u(rng);
    }
    const double r = pearson(PairedSample(a, b)).effect;
    const double scale = 0.5 + (trial % 7);
    std::vector<double> a2;
    std::vector<double> b2;
    for (double v : a) a2.push_back(scale * v + 3.0);
    for (double v : b) b2.push_back(-scale * v);
    CHECK(std::fabs(pearson(PairedSample(a2, b)).effect - r) < 1e-12);
    CHECK(std::fabs(pearson(PairedSample(a, b2)).effect + r) < 1e-12);
  }
}

TEST_CASE("incomplete beta reference value and quadrature grid") {
  CHECK(std::fabs(regularized_incomplete_beta(0.3, 2.5, 1.5) - 0.08894372317066562) < 1e-12);
  CHECK(std::fabs(regularized_incomplete_beta(0.3, 2.5, 1.5) - quadrature_beta(0.3, 2.5, 1.5)) < 1e-10);

  const double xs[] = {0.01, 0.1, 0.2, 0.3, 0.45, 0.5, 0.6, 0.75, 0.9, 0.99};
  const std::pair<double, double> pq[] = {{0.5, 0.5}, {1.0, 1.0}, {2.5, 1.5}, {1.5, 2.5}, {3.0, 7.0},
                                          {7.0, 3.0}, {0.7, 4.0}, {5.0, 0.5}, {10.0, 10.0}, {2.0, 0.5}};
  for (const auto& [p, q] : pq) {
    for (double x : xs) {
      CAPTURE(p);
      CAPTURE(q);
      CAPTURE(x);
      const double got = regularized_incomplete_beta(x, p, q);
      CHECK(std::fabs(got - quadrature_beta(x, p, q)) < 1e-10);
      CHECK(std::fabs(got - boost::math::ibeta(p, q, x)) < 1e-12);
    }
  }
}

TEST_CASE("incomplete beta edges and domain") {
  CHECK(regularized_incomplete_beta(0.0, 2.0, 3.0) == 0.0);
  CHECK(regularized_incomplete_beta(1.0, 2.0, 3.0) == 1.0);
  CHECK(error_of([] { regularized_incomplete_beta(NAN, 1, 1); }) == ErrorCode::domain);
  CHECK(error_of([] { regularized_incomplete_beta(0.5, INFINITY, 1); }) == ErrorCode::domain);
  CHECK(error_of([] { regularized_incomplete_beta(1.5, 1, 1); }) == ErrorCode::domain);
  CHECK(error_of([] { regularized_incomplete_beta(0.5, 0, 1); }) == ErrorCode::domain);
}

TEST_CASE("t tail probability is a decreasing function of |t|") {
  for (double df : {1.0, 2.0, 4.0, 13.0, 30.0, 200.0}) {
    double prev = 1.0 + 1e-15;
    for (int i = 0; i <= 120; ++i) {
      const double t = 0.25 * i;
      const double p = student_t_two_tailed(t, df);
      const double pn = student_t_two_tailed(-t, df);
      CHECK(p == pn);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      if (p > 1e-300) CHECK(p < prev);
      CHECK(std::fabs(p - oracle_t_p(t, df)) <= 1e-8);
      prev = p;
    }
  }
  CHECK(student_t_two_tailed(0.0, 5.0) == 1.0);
  CHECK(student_t_two_tailed(INFINITY, 5.0) == 0.0);
  CHECK(error_of([] { student_t_two_tailed(1.0, 0.0); }) == ErrorCode::domain);
}

TEST_CASE("significance stars") {
  CHECK(significance_stars(0.2) == "ns");
  CHECK(significance_stars(0.05) == "ns");
  CHECK(significance_stars(0.049) == "*");
  CHECK(significance_stars(0.009) == "**");
  CHECK(significance_stars(0.0009) == "***");
  CHECK(significance_stars(1.48e-18) == "****");
}
