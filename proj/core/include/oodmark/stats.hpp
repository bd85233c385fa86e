#pragma once

#include <vector>

namespace oodmark {

struct TTestResult {
  double t_stat = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // two-sided
};

// Welch two-sample t-test (unequal variances) with the
// Welch-Satterthwaite degrees of freedom. Requires >= 2 values per side.
TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided two-proportion z-test with pooled variance (labels-only
// fallback); returns {z, inf-df, p}.
TTestResult two_proportion_ztest(size_t hits_a, size_t n_a, size_t hits_b, size_t n_b);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// CDF of the Student t distribution with df degrees of freedom.
double student_t_cdf(double t, double df);

// Standard normal CDF.
double normal_cdf(double z);

double mean(const std::vector<double>& xs);
double sample_variance(const std::vector<double>& xs);  // unbiased, n-1

}  // namespace oodmark
