#pragma once

#include <string>
#include <vector>

#include "taxonomist/result.hpp"
#include "taxonomist/schema.hpp"

namespace taxonomist::stats {

struct ClassDistribution {
  std::vector<std::string> labels;
  std::vector<std::size_t> counts;

  std::size_t total() const;
  std::vector<double> proportions() const;
  bool operator==(const ClassDistribution&) const = default;
};

struct TestResult {
  double statistic = 0;
  int df = 1;
  double p_value = 1;
  bool significant = false;
  double alpha = 0.05;
};

inline constexpr double kDefaultAlpha = 0.05;

/// P[X >= x] for X ~ chi-squared(df): the regularized upper incomplete
/// gamma Q(df/2, x/2).
double chi2_tail(double statistic, int df);

/// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

struct Paired {
  bool correct_a;
  bool correct_b;
};

/// b = #(A right, B wrong), c = #(A wrong, B right); statistic (b-c)^2/(b+c),
/// or (|b-c|-1)^2/(b+c) with the continuity correction. df = 1.
TestResult mcnemar(const std::vector<Paired>& paired, bool continuity_correction = false,
                   double alpha = kDefaultAlpha);
TestResult mcnemar_counts(std::size_t b, std::size_t c, bool continuity_correction = false,
                          double alpha = kDefaultAlpha);

/// Pearson homogeneity over a 2 x C table. With equal window totals this
/// is sum (A_i - B_i)^2 / (A_i + B_i). Classes empty on both sides are
/// dropped from the table and from df.
TestResult chi2_homogeneity(const ClassDistribution& a, const ClassDistribution& b,
                            double alpha = kDefaultAlpha);

inline constexpr double kDefaultSmoothing = 0.5;

/// D_KL(p || q) in nats. Counts get `smoothing` added per class before
/// normalization.
double kl_divergence(const ClassDistribution& p, const ClassDistribution& q,
                     double smoothing = kDefaultSmoothing);
/// Same on probability vectors, no smoothing. Throws UnsmoothedZero.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     const std::vector<std::string>& labels = {});

/// One bucket per schema parent, in schema order.
ClassDistribution class_distribution(const std::vector<ClassificationResult>& results,
                                     const schema::ClassSchema& schema);

Json test_result_to_json(const TestResult& r);
TestResult test_result_from_json(const Json& j);
Json distribution_to_json(const ClassDistribution& d);
ClassDistribution distribution_from_json(const Json& j);

}  // namespace taxonomist::stats
