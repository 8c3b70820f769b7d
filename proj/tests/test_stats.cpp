// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "presence/errors.hpp"
#include "presence/stats.hpp"

using namespace presence;
using namespace presence::stats;

namespace {

// Average ranks of |d| for non-zero d, computed by sorting.
std::vector<double> average_ranks(const std::vector<double>& d) {
  std::vector<double> mags;
  for (double v : d) {
    if (v != 0.0) mags.push_back(std::abs(v));
  }
  std::vector<double> ranks(mags.size());
  for (std::size_t i = 0; i < mags.size(); ++i) {
    double less = 0, equal = 0;
    for (double m : mags) {
      if (m < mags[i]) ++less;
      if (m == mags[i]) ++equal;
    }
    ranks[i] = less + (equal + 1.0) / 2.0;
  }
  return ranks;
}

}  // namespace

TEST_CASE("incomplete beta against closed forms") {
  // I_x(1, b) = 1 - (1 - x)^b and I_x(a, 1) = x^a
  for (double x : {0.01, 0.2, 0.5, 0.77, 0.99}) {
    for (double p : {0.5, 1.0, 2.5, 7.0}) {
      CHECK(regularized_incomplete_beta(1.0, p, x) == doctest::Approx(1.0 - std::pow(1.0 - x, p)).epsilon(1e-12));
      CHECK(regularized_incomplete_beta(p, 1.0, x) == doctest::Approx(std::pow(x, p)).epsilon(1e-12));
    }
  }
  CHECK(regularized_incomplete_beta(2, 3, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2, 3, 1.0) == 1.0);
}

TEST_CASE("t distribution against Boost.Math") {
  double worst = 0.0;
  for (double df : {1.0, 2.0, 3.5, 10.0, 56.0, 74.0, 113.0, 942.0}) {
    for (double t = 0.0; t < 12.0; t += 0.173) {
      const double mine = student_t_two_sided(t, df);
      const double ref = oracle::boost_t_two_sided(t, df);
      if (ref > 1e-300) worst = std::max(worst, std::abs(mine - ref) / ref);
    }
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-10);
  CHECK(student_t_cdf(0.0, 5.0) == doctest::Approx(0.5));
}

TEST_CASE("cohort summary") {
  const std::vector<double> zero{0, 0};
  CHECK(cohort_summary(zero).mean == 0.0);
  CHECK(cohort_summary(zero).sd == 0.0);
  const std::vector<double> v{0, 10};
  CHECK(cohort_summary(v).mean == 5.0);
  CHECK(cohort_summary(v).sd == doctest::Approx(std::sqrt(50.0)).epsilon(1e-12));
  const std::vector<double> one{3};
  CHECK_THROWS_AS(cohort_summary(one), DomainError);
}

TEST_CASE("two-sample t from summaries") {
  SUBCASE("identical") {
    const CohortSummary a{20, 5.0, 2.0};
    const auto r = ttest_two_sample_summary(a, a);
    CHECK(r.t == 0.0);
    CHECK(r.p_two_sided == 1.0);
    CHECK(r.df == 38.0);
  }
  SUBCASE("printed cells") {
    const auto i = ttest_two_sample_summary({58, 57.2, 26.6}, {57, 63.9, 20.4});
    CHECK(std::abs(i.p_two_sided - 0.13287) <= 0.00005);
    const auto m = ttest_two_sample_summary({58, 49, 22.4}, {18, 73, 25});
    CHECK(std::abs(m.p_two_sided - 0.00024) <= 0.00005);
  }
  SUBCASE("pooled statistic by hand") {
    const CohortSummary a{10, 3.0, 1.0}, b{15, 4.0, 2.0};
    const double sp2 = (9 * 1.0 + 14 * 4.0) / 23.0;
    const double t = (3.0 - 4.0) / std::sqrt(sp2 * (1.0 / 10 + 1.0 / 15));
    const auto r = ttest_two_sample_summary(a, b);
    CHECK(r.t == doctest::Approx(t).epsilon(1e-12));
    CHECK(r.p_two_sided == doctest::Approx(oracle::boost_t_two_sided(t, 23)).epsilon(1e-10));
  }
  SUBCASE("Welch by hand") {
    const CohortSummary a{10, 3.0, 1.0}, b{15, 4.0, 2.0};
    const double va = 1.0 / 10, vb = 4.0 / 15;
    const double t = -1.0 / std::sqrt(va + vb);
    const double df = (va + vb) * (va + vb) / (va * va / 9 + vb * vb / 14);
    const auto r = ttest_two_sample_summary(a, b, false);
    CHECK(r.t == doctest::Approx(t).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(df).epsilon(1e-12));
    CHECK(r.p_two_sided == doctest::Approx(oracle::boost_t_two_sided(t, df)).epsilon(1e-9));
  }
  SUBCASE("symmetry and monotonicity") {
    const CohortSummary a{30, 50, 20}, b{25, 58, 15};
    CHECK(ttest_two_sample_summary(a, b).p_two_sided == ttest_two_sample_summary(b, a).p_two_sided);
    double prev_t = 0.0;
    for (int k = 1; k < 20; ++k) {
      const auto r = ttest_two_sample_summary(a, {25, 50.0 + k, 15});
      CHECK(std::abs(r.t) > prev_t);
      CHECK(r.p_two_sided > 0.0);
      CHECK(r.p_two_sided <= 1.0);
      prev_t = std::abs(r.t);
    }
  }
  SUBCASE("degenerate") {
    const auto r = ttest_two_sample_summary({4, 3, 0}, {16, 3, 0});
    CHECK(r.t == 0.0);
    CHECK(r.p_two_sided == 1.0);
    CHECK_THROWS_AS(ttest_two_sample_summary({1, 3, 0}, {1, 3, 1}), DomainError);
  }
}

TEST_CASE("external communitas comparison frozen value") {
  // scipy.stats.ttest_ind_from_stats(44.14, 6.87, 58, 39.58, 11.23, 886)
  const auto r = ttest_two_sample_summary({58, 44.14, 6.87}, {886, 39.58, 11.23});
  CHECK(r.p_two_sided == doctest::Approx(0.0023193).epsilon(1e-4));
  // the unequal-variance variant lands far lower
  CHECK(ttest_two_sample_summary({58, 44.14, 6.87}, {886, 39.58, 11.23}, false).p_two_sided < 1e-4);
}

TEST_CASE("one-sample t") {
  const std::vector<double> v{1, 2, 3};
  const auto r = ttest_one_sample(v, 0.0);
  CHECK(r.t == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-12));
  CHECK(r.df == 2.0);
  CHECK(r.p_two_sided == doctest::Approx(oracle::boost_t_two_sided(r.t, 2)).epsilon(1e-10));
  const std::vector<double> flat{4, 4, 4, 4};
  const auto d = ttest_one_sample(flat, 4.0);
  CHECK(d.t == 0.0);
  CHECK(d.p_two_sided == 1.0);
}

TEST_CASE("Wilcoxon exact small cases") {
  const std::vector<double> pre{0, 0, 0, 0, 0};
  const std::vector<double> post{1, 2, 3, 4, 5};
  const auto r = wilcoxon_signed_rank(pre, post);
  CHECK(r.exact);
  CHECK(r.w == 0.0);
  CHECK(r.p_two_sided == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK_THROWS_AS(wilcoxon_signed_rank(post, post), DomainError);
}

TEST_CASE("Wilcoxon exact matches 2^n enumeration, including ties") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 5 + trial % 14;
    std::vector<double> pre(n), post(n), diff(n);
    for (int i = 0; i < n; ++i) {
      pre[i] = static_cast<double>(rng() % 6);
      post[i] = static_cast<double>(rng() % 6) + (trial % 3 == 0 ? 1.0 : 0.0);
      diff[i] = post[i] - pre[i];
    }
    const auto ranks = average_ranks(diff);
    if (ranks.size() < 5) continue;
    double wp = 0.0;
    std::size_t k = 0;
    for (double d : diff) {
      if (d == 0.0) continue;
      if (d > 0.0) wp += ranks[k];
      ++k;
    }
    const auto r = wilcoxon_signed_rank(pre, post);
    REQUIRE(r.exact);
    CHECK(r.w_plus == doctest::Approx(wp));
    CHECK(r.p_two_sided == doctest::Approx(oracle::wilcoxon_bruteforce(ranks, wp)).epsilon(1e-12));
  }
}

TEST_CASE("Wilcoxon normal approximation for a large shifted cohort") {
  // pre 1.2 (1.5), post 2.9 (1.4) on the 0..5 pictogram scale, n = 54,
  // paired in rank order. scipy.stats.wilcoxon gives W = 0, p = 5.7538e-10.
  const std::vector<std::pair<int, int>> pre_counts{{0, 25}, {1, 12}, {2, 6}, {3, 6}, {4, 2}, {5, 3}};
  const std::vector<std::pair<int, int>> post_counts{{0, 3}, {1, 2}, {2, 24}, {3, 0}, {4, 18}, {5, 7}};
  std::vector<double> pre, post;
  for (auto [v, c] : pre_counts) pre.insert(pre.end(), c, v);
  for (auto [v, c] : post_counts) post.insert(post.end(), c, v);
  REQUIRE(pre.size() == 54);
  REQUIRE(post.size() == 54);
  const auto a = cohort_summary(pre);
  const auto b = cohort_summary(post);
  CHECK(a.mean == doctest::Approx(1.2).epsilon(0.05));
  CHECK(b.mean == doctest::Approx(2.9).epsilon(0.05));
  const auto r = wilcoxon_signed_rank(pre, post);
  CHECK_FALSE(r.exact);
  CHECK(r.w == 0.0);
  CHECK(r.p_two_sided == doctest::Approx(5.7538e-10).epsilon(1e-3));
  CHECK(r.p_two_sided < 1e-6);
}

TEST_CASE("Cronbach alpha") {
  SUBCASE("identical columns") {
    std::vector<std::vector<double>> m{{1, 1}, {2, 2}, {4, 4}, {3, 3}};
    CHECK(cronbach_alpha(m) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("hand formula, k = 2") {
    // columns [1,2,3] and [2,4,6]: var 1 and 4, row sums 3,6,9 var 9
    std::vector<std::vector<double>> m{{1, 2}, {2, 4}, {3, 6}};
    CHECK(cronbach_alpha(m) == doctest::Approx(2.0 * (1.0 - 5.0 / 9.0)).epsilon(1e-12));
  }
  SUBCASE("independent noise") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> m(1000, std::vector<double>(2));
    for (auto& row : m) row = {g(rng), g(rng)};
    CHECK(std::abs(cronbach_alpha(m)) < 0.3);
  }
  SUBCASE("shift invariance") {
    std::vector<std::vector<double>> m{{1, 2, 2}, {2, 4, 3}, {3, 5, 5}, {2, 2, 1}};
    const double base = cronbach_alpha(m);
    for (auto& row : m) row[1] += 10.0;
    CHECK(cronbach_alpha(m) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("degenerate") {
    std::vector<std::vector<double>> m{{1, 1}, {1, 1}};
    CHECK_THROWS_AS(cronbach_alpha(m), DomainError);
  }
}

TEST_CASE("Pearson and OLS") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y;
  for (double v : x) y.push_back(2 * v + 1);
  const auto f = pearson_and_ols(x, y);
  CHECK(f.r == doctest::Approx(1.0));
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r_squared == doctest::Approx(1.0));
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  CHECK(pearson_and_ols(x, neg).r == doctest::Approx(-1.0));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<double> cx(200), cy(200);
  for (std::size_t i = 0; i < cx.size(); ++i) {
    cx[i] = g(rng);
    cy[i] = 0.6 * cx[i] + g(rng);
  }
  const auto c = pearson_and_ols(cx, cy);
  CHECK(std::abs(c.r_squared - c.r * c.r) < 1e-12);
  std::vector<double> ax, ay;
  for (double v : cx) ax.push_back(3 * v + 7);
  for (double v : cy) ay.push_back(0.5 * v - 2);
  CHECK(pearson_and_ols(ax, ay).r == doctest::Approx(c.r).epsilon(1e-12));
  CHECK(pearson_and_ols(neg, y).r == doctest::Approx(-1.0));

  const std::vector<double> flat{2, 2, 2};
  const std::vector<double> any{1, 2, 3};
  CHECK_THROWS_AS(pearson_and_ols(flat, any), DomainError);
}
