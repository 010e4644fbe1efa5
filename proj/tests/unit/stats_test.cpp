#include "helpers.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <random>

#include "taxonomist/errors.hpp"
#include "taxonomist/stats.hpp"

using namespace taxonomist;
using namespace taxonomist::stats;

namespace {

double boost_tail(double x, int df) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

ClassDistribution dist(std::vector<std::size_t> counts) {
  ClassDistribution d;
  for (std::size_t i = 0; i < counts.size(); ++i) d.labels.push_back("c" + std::to_string(i));
  d.counts = std::move(counts);
  return d;
}

}  // namespace

TEST_CASE("chi-squared tail agrees with boost across df and x") {
  for (int df : {1, 2, 3, 5, 10, 30}) {
    for (double x : {0.01, 0.5, 1.0, 3.84, 7.5, 20.0, 80.0}) {
      CAPTURE(df);
      CAPTURE(x);
      CHECK(chi2_tail(x, df) == doctest::Approx(boost_tail(x, df)).epsilon(1e-9));
    }
  }
  CHECK(chi2_tail(0, 3) == 1.0);
  CHECK_THROWS_AS(chi2_tail(1, 0), InvalidArgument);
  CHECK_THROWS_AS(gamma_q(0, 1), InvalidArgument);
}

TEST_CASE("mcnemar statistic and correction") {
  auto r = mcnemar_counts(10, 2);
  CHECK(r.statistic == doctest::Approx(64.0 / 12.0));
  CHECK(r.df == 1);
  CHECK(r.p_value == doctest::Approx(boost_tail(64.0 / 12.0, 1)));
  CHECK(r.significant);
  auto cc = mcnemar_counts(10, 2, true);
  CHECK(cc.statistic == doctest::Approx(49.0 / 12.0));
  CHECK(mcnemar_counts(5, 5).statistic == 0.0);
  CHECK_FALSE(mcnemar_counts(5, 5).significant);
  CHECK_THROWS_AS(mcnemar_counts(0, 0), NoDiscordantPairs);
}

TEST_CASE("mcnemar on paired outcomes counts only discordant pairs") {
  std::vector<Paired> p;
  for (int i = 0; i < 30; ++i) p.push_back({true, true});
  for (int i = 0; i < 7; ++i) p.push_back({true, false});
  for (int i = 0; i < 3; ++i) p.push_back({false, true});
  for (int i = 0; i < 9; ++i) p.push_back({false, false});
  CHECK(mcnemar(p).statistic == doctest::Approx(mcnemar_counts(7, 3).statistic));
}

TEST_CASE("homogeneity with equal totals uses the short form") {
  auto a = dist({30, 10, 20});
  auto b = dist({20, 25, 15});
  double expected = 100.0 / 50 + 225.0 / 35 + 25.0 / 35;
  auto r = chi2_homogeneity(a, b);
  CHECK(r.statistic == doctest::Approx(expected));
  CHECK(r.df == 2);
  CHECK(r.p_value == doctest::Approx(boost_tail(expected, 2)));
}

TEST_CASE("homogeneity with unequal totals is the general Pearson statistic") {
  auto a = dist({10, 20, 0});
  auto b = dist({30, 20, 0});
  // Expected counts from row and column margins, empty class dropped.
  double n = 80, ra = 30, rb = 50;
  double cols[] = {40, 40};
  double obs_a[] = {10, 20}, obs_b[] = {30, 20};
  double x2 = 0;
  for (int j = 0; j < 2; ++j) {
    double ea = ra * cols[j] / n, eb = rb * cols[j] / n;
    x2 += (obs_a[j] - ea) * (obs_a[j] - ea) / ea + (obs_b[j] - eb) * (obs_b[j] - eb) / eb;
  }
  auto r = chi2_homogeneity(a, b);
  CHECK(r.statistic == doctest::Approx(x2));
  CHECK(r.df == 1);
}

TEST_CASE("homogeneity refuses degenerate tables") {
  CHECK_THROWS_AS(chi2_homogeneity(dist({0, 0}), dist({3, 4})), DegenerateTest);
  CHECK_THROWS_AS(chi2_homogeneity(dist({5, 0}), dist({3, 0})), DegenerateTest);
  auto other = dist({1, 1});
  other.labels = {"x", "y"};
  CHECK_THROWS_AS(chi2_homogeneity(dist({1, 1}), other), InvalidArgument);
}

TEST_CASE("kl divergence on vectors") {
  std::vector<double> p{0.5, 0.5}, q{0.9, 0.1};
  CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(5.0)));
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(kl_divergence({1.0, 0.0}, {0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(kl_divergence({0.5, 0.5}, {1.0, 0.0}, {"a", "b"}), UnsmoothedZero);
  CHECK_THROWS_AS(kl_divergence({1.0}, {0.5, 0.5}), InvalidArgument);
}

TEST_CASE("kl divergence smooths counts") {
  auto p = dist({3, 0});
  auto q = dist({1, 2});
  // (3.5, 0.5)/4 against (1.5, 2.5)/4
  double expected = 0.875 * std::log(3.5 / 1.5) + 0.125 * std::log(0.5 / 2.5);
  CHECK(kl_divergence(p, q) == doctest::Approx(expected));
  CHECK_THROWS_AS(kl_divergence(p, dist({0, 4}), 0.0), UnsmoothedZero);
  CHECK_THROWS_AS(kl_divergence(p, q, -1), InvalidArgument);
}

TEST_CASE("kl divergence is non-negative on random distributions") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> u(0, 40);
  for (int i = 0; i < 200; ++i) {
    auto p = dist({u(rng), u(rng), u(rng), u(rng)});
    auto q = dist({u(rng), u(rng), u(rng), u(rng)});
    CHECK(kl_divergence(p, q) >= -1e-12);
  }
}

TEST_CASE("class distribution follows schema order") {
  auto s = testing::flat_schema({"B", "A", "C"});
  std::vector<ClassificationResult> rs(4);
  rs[0].parent = "A";
  rs[1].parent = "A";
  rs[2].parent = "C";
  rs[3].parent = "A";
  auto d = class_distribution(rs, s);
  CHECK(d.labels == std::vector<std::string>{"B", "A", "C"});
  CHECK(d.counts == std::vector<std::size_t>{0, 3, 1});
  CHECK(d.total() == 4);
  CHECK(d.proportions()[1] == doctest::Approx(0.75));
  rs[0].parent = "Z";
  CHECK_THROWS_AS(class_distribution(rs, s), UnknownLabel);
}

TEST_CASE("stats json round trips") {
  auto r = mcnemar_counts(4, 9);
  auto back = test_result_from_json(test_result_to_json(r));
  CHECK(back.statistic == r.statistic);
  CHECK(back.p_value == r.p_value);
  CHECK(back.significant == r.significant);
  auto d = dist({1, 2, 3});
  CHECK(distribution_from_json(distribution_to_json(d)) == d);
}
