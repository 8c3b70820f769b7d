// SPDX-License-Identifier: Apache-2.0
#include "presence/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "presence/errors.hpp"

namespace presence::stats {
namespace {

// Continued fraction for I_x(a, b) by the modified Lentz method.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  return h;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return std::min(1.0, regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t)));
}

double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_sided(t, df);
  return t < 0.0 ? tail : 1.0 - tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw DomainError("variance needs at least 2 values");
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

CohortSummary cohort_summary(std::span<const double> values) {
  if (values.size() < 2) throw DomainError("cohort summary needs at least 2 values");
  return {values.size(), mean_of(values), std::sqrt(sample_variance(values))};
}

TTestResult ttest_two_sample_summary(const CohortSummary& a, const CohortSummary& b, bool pooled) {
  const double na = static_cast<double>(a.n);
  const double nb = static_cast<double>(b.n);
  if (a.n < 1 || b.n < 1) throw DomainError("cohorts must be non-empty");
  if (a.sd < 0.0 || b.sd < 0.0) throw DomainError("standard deviations must be non-negative");
  const double va = a.sd * a.sd;
  const double vb = b.sd * b.sd;
  const double diff = a.mean - b.mean;

  TTestResult r;
  double se2 = 0.0;
  if (pooled) {
    r.df = na + nb - 2.0;
    if (!(r.df > 0.0)) throw DomainError("pooled t-test needs n_a + n_b > 2");
    const double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / r.df;
    se2 = sp2 * (1.0 / na + 1.0 / nb);
  } else {
    const double qa = va / na;
    const double qb = vb / nb;
    se2 = qa + qb;
    if (a.n < 2 || b.n < 2) throw DomainError("Welch t-test needs n >= 2 in both cohorts");
    r.df = se2 > 0.0 ? se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0)) : na + nb - 2.0;
  }
  if (se2 == 0.0) {
    if (diff == 0.0) return {0.0, r.df, 1.0};
    r.t = std::copysign(std::numeric_limits<double>::infinity(), diff);
    r.p_two_sided = 0.0;
    return r;
  }
  r.t = diff / std::sqrt(se2);
  r.p_two_sided = student_t_two_sided(r.t, r.df);
  return r;
}

TTestResult ttest_one_sample(std::span<const double> values, double mu0) {
  const CohortSummary s = cohort_summary(values);
  TTestResult r;
  r.df = static_cast<double>(s.n - 1);
  const double diff = s.mean - mu0;
  if (s.sd == 0.0) {
    if (diff == 0.0) return {0.0, r.df, 1.0};
    r.t = std::copysign(std::numeric_limits<double>::infinity(), diff);
    r.p_two_sided = 0.0;
    return r;
  }
  r.t = diff / (s.sd / std::sqrt(static_cast<double>(s.n)));
  r.p_two_sided = student_t_two_sided(r.t, r.df);
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> pre, std::span<const double> post) {
  if (pre.size() != post.size()) throw DomainError("paired samples must have equal length");
  std::vector<double> d;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const double diff = post[i] - pre[i];
    if (diff != 0.0) d.push_back(diff);
  }
  if (d.empty()) throw DomainError("all paired differences are zero");
  if (d.size() < 5) throw DomainError("signed-rank test needs at least 5 non-zero differences");

  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });

  // doubled average ranks stay integral
  std::vector<long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long r2 = static_cast<long>(i + 1 + j + 1);  // 2 * average of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  WilcoxonResult r;
  r.n = n;
  long w_plus2 = 0;
  long total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) w_plus2 += rank2[i];
  }
  r.w_plus = w_plus2 / 2.0;
  r.w_minus = (total2 - w_plus2) / 2.0;
  r.w = std::min(r.w_plus, r.w_minus);

  constexpr std::size_t kExactLimit = 25;
  if (n <= kExactLimit) {
    r.exact = true;
    // count[s] = number of sign assignments whose doubled positive-rank sum is s
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (long s = reach; s >= 0; --s) {
        if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + rank2[i])] += count[static_cast<std::size_t>(s)];
      }
      reach += rank2[i];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0.0;
    double upper = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w_plus2) lower += count[static_cast<std::size_t>(s)];
      if (s >= w_plus2) upper += count[static_cast<std::size_t>(s)];
    }
    r.p_two_sided = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    return r;
  }

  const double nd = static_cast<double>(n);
  const double mean = nd * (nd + 1.0) / 4.0;
  const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
  const double z = (r.w_plus - mean) / std::sqrt(var);
  r.p_two_sided = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  return r;
}

double cronbach_alpha(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2) throw DomainError("Cronbach's alpha needs at least 2 respondents");
  const std::size_t k = rows.front().size();
  if (k < 2) throw DomainError("Cronbach's alpha needs at least 2 items");
  for (const auto& r : rows) {
    if (r.size() != k) throw DomainError("ragged item matrix");
  }
  double item_var_sum = 0.0;
  std::vector<double> column(rows.size());
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i][j];
    item_var_sum += sample_variance(column);
  }
  std::vector<double> totals(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) totals[i] = std::accumulate(rows[i].begin(), rows[i].end(), 0.0);
  const double total_var = sample_variance(totals);
  if (total_var == 0.0) throw DomainError("total score variance is zero");
  const double kd = static_cast<double>(k);
  return kd / (kd - 1.0) * (1.0 - item_var_sum / total_var);
}

LinearFit pearson_and_ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("x and y must have equal length");
  if (x.size() < 3) throw DomainError("regression needs at least 3 points");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("x is constant");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy == 0.0) return fit;  // flat y: r and R^2 reported as 0
  fit.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += e * e;
  }
  fit.r_squared = 1.0 - ss_res / syy;
  return fit;
}

}  // namespace presence::stats
