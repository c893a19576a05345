#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace apl::stats {

/// Two equal-length measurement vectors over the same subjects.
class PairedSample {
 public:
  /// Throws Error(validation) when lengths differ, n < 2 or a value is non-finite.
  PairedSample(std::vector<std::string> labels, std::vector<double> a, std::vector<double> b);
  PairedSample(std::vector<double> a, std::vector<double> b);

  std::size_t size() const noexcept { return a_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<double>& a() const noexcept { return a_; }
  const std::vector<double>& b() const noexcept { return b_; }

 private:
  void validate() const;

  std::vector<std::string> labels_;
  std::vector<double> a_;
  std::vector<double> b_;
};

struct TestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_two_tailed = 1.0;
  /// Mean difference (t-test) or r (Pearson).
  double effect = 0.0;
};

/// Student's paired t-test on d = a - b, two-tailed.
TestResult paired_t_test(const PairedSample& sample);

/// Pearson r with the two-tailed t-based p-value (df = n - 2).
TestResult pearson(const PairedSample& sample);

/// I_x(p, q), continued fraction with the usual symmetry switch.
double regularized_incomplete_beta(double x, double p, double q);

/// Two-tailed Student-t tail probability P(|T| >= |t|).
double student_t_two_tailed(double t, double df);

/// "****", "***", "**", "*" or "ns" for p below 1e-4, 1e-3, 1e-2, 5e-2.
std::string_view significance_stars(double p) noexcept;

}  // namespace apl::stats
