#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "voxrag/eval/stats.hpp"

using namespace voxrag;
using namespace voxrag::eval;
using namespace voxrag::testing;

TEST(StudentT, PublishedTableValues) {
  EXPECT_NEAR(student_t_two_tailed(2.0096, 49), 0.0500, 0.0005);
  EXPECT_NEAR(student_t_two_tailed(2.6800, 49), 0.0100, 0.0002);
  EXPECT_NEAR(student_t_two_tailed(12.706, 1), 0.0500, 0.0005);
  EXPECT_NEAR(student_t_two_tailed(2.2281, 10), 0.0500, 0.0005);
  EXPECT_NEAR(student_t_two_tailed(1.9600, 1e7), 0.0500, 0.0005);
  EXPECT_DOUBLE_EQ(student_t_two_tailed(0.0, 20), 1.0);
  EXPECT_NEAR(student_t_two_tailed(-2.0096, 49), student_t_two_tailed(2.0096, 49), 1e-15);
}

TEST(StudentT, CauchyClosedForm) {
  // dof 1: p = 1 - 2 atan(|t|) / pi.
  for (double t : {0.1, 0.5, 1.0, 3.0, 25.0}) {
    EXPECT_NEAR(student_t_two_tailed(t, 1), 1.0 - 2.0 * std::atan(t) / std::numbers::pi, 1e-10);
  }
}

TEST(IncompleteBeta, Symmetry) {
  for (double x : {0.01, 0.2, 0.5, 0.77, 0.99}) {
    EXPECT_NEAR(incomplete_beta(2.5, 0.5, x), 1.0 - incomplete_beta(0.5, 2.5, 1.0 - x), 1e-12);
  }
  EXPECT_NEAR(incomplete_beta(1.0, 1.0, 0.3), 0.3, 1e-14);
}

TEST(Paired, MatchesHandFormula) {
  const std::vector<double> a{2, 2, 1, 0, 2, 1, 2, 2};
  const std::vector<double> b{1, 2, 0, 0, 1, 1, 0, 2};
  const auto s = paired_stats(a, b);
  // diff = 1 0 1 0 1 0 2 0 ; mean 5/8 ; sum sq dev = 15/8 ... computed below.
  const double m = 5.0 / 8.0;
  double ss = 0.0;
  for (double d : {1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0}) ss += (d - m) * (d - m);
  const double sd = std::sqrt(ss / 7.0);
  EXPECT_NEAR(s.mean_diff, m, 1e-15);
  EXPECT_NEAR(s.sd_diff, sd, 1e-15);
  EXPECT_NEAR(s.d_z, m / sd, 1e-12);
  EXPECT_NEAR(s.t, m / sd * std::sqrt(8.0), 1e-12);
}

TEST(Paired, TEqualsDzRootNOnRandomData) {
  Noise noise(31);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + noise.bits() % 80;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = noise.next() * 3.0;
      b[i] = a[i] * noise.uniform(0.0, 1.0) + noise.next();
    }
    const auto s = paired_stats(a, b);
    EXPECT_NEAR(s.t, s.d_z * std::sqrt(static_cast<double>(n)), 1e-9 * std::max(1.0, std::abs(s.t)));
    EXPECT_GE(s.p_two_tailed, 0.0);
    EXPECT_LE(s.p_two_tailed, 1.0);
  }
}

TEST(Paired, Errors) {
  const std::vector<double> a{1, 2, 3}, b{1, 2};
  EXPECT_THROW(paired_stats(a, b), Error);
  try {
    paired_stats(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateVariance);
  }
}

TEST(Paired, ReportedConstantsChain) {
  // Relevance std 0.87, precision std 0.81, correlation 0.77, mean gap 0.38.
  const double sd = sd_of_difference(0.87, 0.81, 0.77);
  EXPECT_NEAR(sd, 0.573, 0.0005);
  const double dz = 0.38 / sd;
  EXPECT_NEAR(dz, 0.66, 0.02);
  EXPECT_NEAR(dz, 0.67, 0.02);
  for (double d : {0.49, 0.52, 0.67}) {
    const double t = d * std::sqrt(50.0);
    EXPECT_LT(student_t_two_tailed(t, 49), 0.01) << d;
  }
  EXPECT_NEAR(0.67 * std::sqrt(50.0), 4.74, 0.01);
}

TEST(Pearson, MatchesCovarianceFormula) {
  Noise noise(32);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + noise.bits() % 50;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = noise.next();
      b[i] = 0.5 * a[i] + noise.next();
    }
    // Reference: cov / (sd_a sd_b), each from its own two-pass computation.
    const double ma = mean(a), mb = mean(b);
    double cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) cov += (a[i] - ma) * (b[i] - mb);
    cov /= static_cast<double>(n - 1);
    EXPECT_NEAR(pearson_r(a, b), cov / (sample_std(a) * sample_std(b)), 1e-12);
  }
}

TEST(Pearson, DegenerateAndPerfect) {
  const std::vector<double> a{1, 2, 3, 4}, c{5, 5, 5, 5}, neg{-2, -4, -6, -8};
  EXPECT_DOUBLE_EQ(pearson_r(a, a), 1.0);
  EXPECT_DOUBLE_EQ(pearson_r(a, neg), -1.0);
  EXPECT_THROW(pearson_r(a, c), Error);
}

TEST(SdOfDifference, AgreesWithSampleComputation) {
  Noise noise(33);
  std::vector<double> a(400), b(400), d(400);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = noise.next();
    b[i] = 0.7 * a[i] + 0.3 * noise.next();
    d[i] = a[i] - b[i];
  }
  EXPECT_NEAR(sd_of_difference(sample_std(a), sample_std(b), pearson_r(a, b)), sample_std(d), 1e-12);
}
