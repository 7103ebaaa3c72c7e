#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "voxrag/error.hpp"

namespace voxrag::eval {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw Error(Errc::LengthMismatch, "mean of an empty sample");
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator), two-pass.
inline double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) throw Error(Errc::LengthMismatch, "standard deviation needs at least two values");
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

/// Regularized incomplete beta I_x(a, b) via the modified Lentz continued
/// fraction, using the symmetry relation where the fraction converges slowly.
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 1000; ++m) {
    const double md = m;
    // even step
    double num = md * (b - md) * x / ((a + 2 * md - 1) * (a + 2 * md));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;
    // odd step
    num = -(a + md) * (a + b + md) * x / ((a + 2 * md) * (a + 2 * md + 1));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::exp(log_front) * f / a;
}

/// Two-tailed p-value of Student's t with `dof` degrees of freedom.
inline double student_t_two_tailed(double t, double dof) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

struct PairedStats {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double t = 0.0;
  double p_two_tailed = 1.0;
  double d_z = 0.0;  // mean(diff) / sd(diff)
};

/// Paired t-test on a - b.
inline PairedStats paired_stats(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::LengthMismatch, "paired samples differ in length");
  if (a.size() < 2) throw Error(Errc::LengthMismatch, "paired test needs n >= 2");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];

  PairedStats s;
  s.n = diff.size();
  s.mean_diff = mean(diff);
  s.sd_diff = sample_std(diff);
  if (!(s.sd_diff > 0.0)) throw Error(Errc::DegenerateVariance, "paired differences have zero variance");
  s.d_z = s.mean_diff / s.sd_diff;
  s.t = s.mean_diff / (s.sd_diff / std::sqrt(static_cast<double>(s.n)));
  s.p_two_tailed = student_t_two_tailed(s.t, static_cast<double>(s.n - 1));
  return s;
}

/// Standard deviation of a - b from the marginal deviations and their
/// correlation: sqrt(sa^2 + sb^2 - 2 r sa sb).
inline double sd_of_difference(double sd_a, double sd_b, double r) {
  return std::sqrt(sd_a * sd_a + sd_b * sd_b - 2.0 * r * sd_a * sd_b);
}

inline double pearson_r(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::LengthMismatch, "correlated samples differ in length");
  if (a.size() < 2) throw Error(Errc::LengthMismatch, "correlation needs n >= 2");
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(Errc::DegenerateVariance, "correlation with a constant sample");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace voxrag::eval
