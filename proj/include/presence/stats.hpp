// SPDX-License-Identifier: Apache-2.0
//
// Hypothesis tests and descriptive statistics used by the questionnaire
// analysis. Sample standard deviations use the n-1 denominator throughout.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace presence::stats {

/// I_x(a, b), relative error well below 1e-10 for the t-test range.
double regularized_incomplete_beta(double a, double b, double x);

/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);
/// P(|T| >= |t|).
double student_t_two_sided(double t, double df);
double normal_cdf(double z);

struct CohortSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Throws DomainError for fewer than 2 values.
CohortSummary cohort_summary(std::span<const double> values);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
};

/// Student t from summary statistics; pooled variance by default, Welch
/// when `pooled` is false. Zero variance with equal means gives t=0, p=1.
TTestResult ttest_two_sample_summary(const CohortSummary& a, const CohortSummary& b, bool pooled = true);

TTestResult ttest_one_sample(std::span<const double> values, double mu0);

struct WilcoxonResult {
  double w = 0.0;        // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n = 0;     // pairs with non-zero difference
  bool exact = false;
  double p_two_sided = 1.0;
};

/// Paired signed-rank test on post - pre. Zero differences are dropped,
/// tied magnitudes get average ranks. Exact null distribution for n <= 25,
/// otherwise the tie-corrected normal approximation without continuity
/// correction. Throws DomainError when all differences are zero, lengths
/// differ, or fewer than 5 non-zero pairs remain.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> pre, std::span<const double> post);

/// Rows are respondents, columns are items.
double cronbach_alpha(const std::vector<std::vector<double>>& items_by_participant);

struct LinearFit {
  double r = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;  // 1 - SS_res / SS_tot
};

/// Pearson correlation and least-squares line. Throws DomainError for
/// fewer than 3 points or constant x.
LinearFit pearson_and_ols(std::span<const double> x, std::span<const double> y);

double sample_variance(std::span<const double> v);

}  // namespace presence::stats
