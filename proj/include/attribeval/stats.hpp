#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "attribeval/error.hpp"

namespace attribeval::stats {

struct CorrelationResult {
  double r = 0.0;
  std::size_t n = 0;
  // Two-tailed; absent when n < 3 (no degrees of freedom left).
  std::optional<double> p_value;
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw UsageError("mean of an empty vector");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Square root of the unbiased (n - 1) variance.
inline double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) throw UsageError("sample standard deviation needs n >= 2");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace detail {

// Continued fraction for the incomplete beta function, evaluated with the
// modified Lentz method.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw UsageError("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fast for x < (a + 1) / (a + b + 2); use the
  // symmetry I_x(a, b) = 1 - I_{1-x}(b, a) elsewhere.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// CDF of Student's t with `df` degrees of freedom.
inline double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw UsageError("t distribution needs df > 0");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

inline double two_tailed_t_pvalue(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return std::clamp(incomplete_beta(df / 2.0, 0.5, df / (df + t * t)), 0.0, 1.0);
}

// Product-moment correlation. The p-value tests r against zero with
// t = r sqrt((n - 2) / (1 - r^2)) on n - 2 degrees of freedom.
inline CorrelationResult pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("pearson_r: vectors differ in length");
  if (x.size() < 2) throw UsageError("pearson_r: need at least 2 points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UsageError("pearson_r: constant vector, correlation undefined");
  CorrelationResult out;
  out.n = x.size();
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (out.n >= 3) {
    const double df = static_cast<double>(out.n - 2);
    const double one_minus = 1.0 - out.r * out.r;
    const double t = one_minus <= 0.0 ? std::numeric_limits<double>::infinity()
                                      : std::fabs(out.r) * std::sqrt(df / one_minus);
    out.p_value = two_tailed_t_pvalue(t, df);
  }
  return out;
}

inline std::vector<double> normalize_by_max(std::span<const double> values) {
  if (values.empty()) throw UsageError("normalize_by_max: empty vector");
  const double mx = *std::max_element(values.begin(), values.end());
  if (std::any_of(values.begin(), values.end(), [](double v) { return v < 0.0; })) {
    throw UsageError("normalize_by_max: negative value");
  }
  if (!(mx > 0.0)) throw UsageError("normalize_by_max: maximum is zero");
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(v / mx);
  return out;
}

}  // namespace attribeval::stats
