#include "taxonomist/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "taxonomist/errors.hpp"

namespace taxonomist::stats {

namespace {

constexpr int kMaxIterations = 1000;
constexpr double kEps = 1e-15;

// Lower series P(a, x), for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIterations; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper Q(a, x) by Lentz's continued fraction, for x >= a + 1.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

void check_labels(const ClassDistribution& a, const ClassDistribution& b) {
  if (a.labels != b.labels || a.counts.size() != a.labels.size() ||
      b.counts.size() != b.labels.size()) {
    throw InvalidArgument("class distributions must share the same ordered labels");
  }
}

TestResult finish(double statistic, int df, double alpha) {
  TestResult r;
  r.statistic = statistic;
  r.df = df;
  r.p_value = chi2_tail(statistic, df);
  r.alpha = alpha;
  r.significant = r.p_value < alpha;
  return r;
}

}  // namespace

std::size_t ClassDistribution::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::vector<double> ClassDistribution::proportions() const {
  std::vector<double> out(counts.size(), 0.0);
  auto n = total();
  if (n == 0) return out;
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = double(counts[i]) / double(n);
  return out;
}

double gamma_q(double a, double x) {
  if (a <= 0) throw InvalidArgument("gamma_q requires a > 0");
  if (x <= 0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi2_tail(double statistic, int df) {
  if (df < 1) throw InvalidArgument("chi-squared df must be positive");
  if (!(statistic > 0)) return 1.0;
  return std::clamp(gamma_q(0.5 * df, 0.5 * statistic), 0.0, 1.0);
}

TestResult mcnemar_counts(std::size_t b, std::size_t c, bool continuity_correction,
                          double alpha) {
  if (b + c == 0) throw NoDiscordantPairs();
  double diff = std::fabs(double(b) - double(c));
  if (continuity_correction) diff = std::max(0.0, diff - 1.0);
  return finish(diff * diff / double(b + c), 1, alpha);
}

TestResult mcnemar(const std::vector<Paired>& paired, bool continuity_correction, double alpha) {
  std::size_t b = 0, c = 0;
  for (const auto& p : paired) {
    if (p.correct_a && !p.correct_b) ++b;
    if (!p.correct_a && p.correct_b) ++c;
  }
  return mcnemar_counts(b, c, continuity_correction, alpha);
}

TestResult chi2_homogeneity(const ClassDistribution& a, const ClassDistribution& b,
                            double alpha) {
  check_labels(a, b);
  const double na = double(a.total());
  const double nb = double(b.total());
  if (na == 0 || nb == 0) throw DegenerateTest("a window with no documents cannot be compared");
  const double n = na + nb;
  double statistic = 0.0;
  int contributing = 0;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    double col = double(a.counts[i] + b.counts[i]);
    if (col == 0) continue;
    ++contributing;
    double ea = na * col / n;
    double eb = nb * col / n;
    statistic += (a.counts[i] - ea) * (a.counts[i] - ea) / ea +
                 (b.counts[i] - eb) * (b.counts[i] - eb) / eb;
  }
  if (contributing < 2) {
    throw DegenerateTest("chi-squared homogeneity needs two classes with observations (df = 0)");
  }
  return finish(statistic, contributing - 1, alpha);
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     const std::vector<std::string>& labels) {
  if (p.size() != q.size()) throw InvalidArgument("KL inputs differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    if (q[i] <= 0) throw UnsmoothedZero(i < labels.size() ? labels[i] : std::to_string(i));
    d += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(0.0, d);
}

double kl_divergence(const ClassDistribution& p, const ClassDistribution& q, double smoothing) {
  check_labels(p, q);
  if (smoothing < 0) throw InvalidArgument("smoothing must be non-negative");
  auto normalize = [&](const ClassDistribution& d) {
    double total = double(d.total()) + smoothing * double(d.counts.size());
    std::vector<double> out(d.counts.size(), 0.0);
    if (total == 0) return out;
    for (std::size_t i = 0; i < d.counts.size(); ++i) out[i] = (d.counts[i] + smoothing) / total;
    return out;
  };
  return kl_divergence(normalize(p), normalize(q), p.labels);
}

ClassDistribution class_distribution(const std::vector<ClassificationResult>& results,
                                     const schema::ClassSchema& schema) {
  ClassDistribution d;
  d.labels = schema.parent_names();
  d.counts.assign(d.labels.size(), 0);
  for (const auto& r : results) {
    auto it = std::find(d.labels.begin(), d.labels.end(), r.parent);
    if (it == d.labels.end()) throw UnknownLabel(r.parent);
    ++d.counts[static_cast<std::size_t>(it - d.labels.begin())];
  }
  return d;
}

Json test_result_to_json(const TestResult& r) {
  return Json{{"statistic", r.statistic}, {"df", r.df},       {"p_value", r.p_value},
              {"significant", r.significant}, {"alpha", r.alpha}};
}

TestResult test_result_from_json(const Json& j) {
  TestResult r;
  r.statistic = j.at("statistic").get<double>();
  r.df = j.at("df").get<int>();
  r.p_value = j.at("p_value").get<double>();
  r.significant = j.at("significant").get<bool>();
  r.alpha = j.value("alpha", kDefaultAlpha);
  return r;
}

Json distribution_to_json(const ClassDistribution& d) {
  return Json{{"labels", d.labels}, {"counts", d.counts}, {"total", d.total()}};
}

ClassDistribution distribution_from_json(const Json& j) {
  ClassDistribution d;
  d.labels = j.at("labels").get<std::vector<std::string>>();
  d.counts = j.at("counts").get<std::vector<std::size_t>>();
  if (d.labels.size() != d.counts.size()) throw InvalidArgument("labels and counts differ in length");
  return d;
}

}  // namespace taxonomist::stats
