#include "oodmark/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace oodmark {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("variance needs at least 2 values");
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

namespace {

// Lentz continued fraction for the incomplete beta (Numerical Recipes betacf).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("incomplete_beta: a, b must be positive");
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x must be in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (df <= 0.0) throw std::invalid_argument("student_t_cdf: df must be positive");
  if (t == 0.0) return 0.5;
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x);
  return t > 0.0 ? 1.0 - half_tail : half_tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("welch_ttest: each sample needs at least 2 values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = sample_variance(a) / na;
  const double vb = sample_variance(b) / nb;
  TTestResult r;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    // two constant samples: identical means => no evidence, else infinite t
    r.df = na + nb - 2.0;
    if (mean(a) == mean(b)) {
      r.t_stat = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_stat = mean(a) > mean(b) ? std::numeric_limits<double>::infinity()
                                   : -std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
    return r;
  }
  r.t_stat = (mean(a) - mean(b)) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p_value = 2.0 * student_t_cdf(-std::fabs(r.t_stat), r.df);
  if (r.p_value > 1.0) r.p_value = 1.0;
  return r;
}

TTestResult two_proportion_ztest(size_t hits_a, size_t n_a, size_t hits_b, size_t n_b) {
  if (n_a == 0 || n_b == 0) throw std::invalid_argument("two_proportion_ztest: empty sample");
  if (hits_a > n_a || hits_b > n_b)
    throw std::invalid_argument("two_proportion_ztest: hits exceed sample size");
  const double pa = static_cast<double>(hits_a) / static_cast<double>(n_a);
  const double pb = static_cast<double>(hits_b) / static_cast<double>(n_b);
  const double pool = static_cast<double>(hits_a + hits_b) / static_cast<double>(n_a + n_b);
  const double se2 = pool * (1.0 - pool) * (1.0 / static_cast<double>(n_a) +
                                            1.0 / static_cast<double>(n_b));
  TTestResult r;
  r.df = std::numeric_limits<double>::infinity();
  if (se2 == 0.0) {
    r.t_stat = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.t_stat = (pa - pb) / std::sqrt(se2);
  r.p_value = 2.0 * normal_cdf(-std::fabs(r.t_stat));
  if (r.p_value > 1.0) r.p_value = 1.0;
  return r;
}

}  // namespace oodmark
