#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "replica_es/errors.hpp"
#include "replica_es/special_fn.hpp"

namespace rs = replica_es;

TEST(special_fn, g_branches) {
  EXPECT_EQ(rs::g(0.5), 0.0);
  EXPECT_DOUBLE_EQ(rs::g(-0.5), 0.25);
  EXPECT_DOUBLE_EQ(rs::g(-1.0), 1.0);
  EXPECT_NEAR(rs::g(-1.0 - 1e-9), 1.0 + 2e-9, 1e-15);
  EXPECT_EQ(rs::g(0.0), 0.0);
}

TEST(special_fn, g_prime_branches) {
  EXPECT_EQ(rs::g_prime(1.0), 0.0);
  EXPECT_DOUBLE_EQ(rs::g_prime(-0.25), -0.5);
  EXPECT_DOUBLE_EQ(rs::g_prime(-3.0), -2.0);
  EXPECT_DOUBLE_EQ(rs::g_prime(-1.0), -2.0);
}

TEST(special_fn, knot_continuity) {
  for (double knot : {-1.0, 0.0}) {
    // Dyadic offsets keep knot +- d exact, so only g itself is under test.
    for (double d : {std::ldexp(1.0, -20), std::ldexp(1.0, -27), std::ldexp(1.0, -33)}) {
      EXPECT_LE(std::abs(rs::g(knot - d) - rs::g(knot + d)), 4.0 * d);
      EXPECT_LE(std::abs(rs::g_prime(knot - d) - rs::g_prime(knot + d)), 4.0 * d);
    }
  }
}

TEST(special_fn, g_prime_matches_difference_quotient) {
  for (double x = -3.0; x <= 1.0; x += 0.0625) {
    const double h = 1e-6;
    EXPECT_NEAR((rs::g(x + h) - rs::g(x - h)) / (2 * h), rs::g_prime(x), 1e-6) << x;
  }
}

TEST(special_fn, phi_values) {
  EXPECT_EQ(rs::phi(0.0), 0.5);
  EXPECT_NEAR(rs::phi(1.959964), 0.975, 1e-6);
  EXPECT_NEAR(rs::phi(1.959964), oracle::normal_cdf(1.959964), 1e-14);
  EXPECT_EQ(rs::phi(-INFINITY), 0.0);
  EXPECT_EQ(rs::phi(INFINITY), 1.0);
}

TEST(special_fn, phi_relative_accuracy_against_quadrature) {
  for (double x = -8.0; x <= 8.0; x += 0.25) {
    const double ref = oracle::normal_cdf(x);
    EXPECT_LE(std::abs(rs::phi(x) - ref), 1e-12 * ref) << x;
  }
  for (double x = -30.0; x <= -6.0; x += 1.0) {
    const double ref = oracle::normal_cdf(x);
    EXPECT_LE(std::abs(rs::phi(x) - ref), 1e-12 * ref) << x;
  }
}

TEST(special_fn, phi_reflection) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng);
    EXPECT_NEAR(rs::phi(x) + rs::phi(-x), 1.0, 1e-15);
    EXPECT_NEAR(rs::phi_upper(x), rs::phi(-x), 1e-16);
  }
}

TEST(special_fn, psi_values) {
  EXPECT_NEAR(rs::psi(0.0), 1.0 / std::sqrt(2.0 * M_PI), 1e-16);
  EXPECT_LT(rs::psi(-10.0), 1e-20);
  EXPECT_GT(rs::psi(-10.0), 0.0);
  EXPECT_EQ(rs::psi(-26.0), 0.0);
}

TEST(special_fn, w_values) {
  EXPECT_DOUBLE_EQ(rs::w_fn(0.0), 0.25);
  EXPECT_LT(rs::w_fn(-8.0), 1e-13);
  EXPECT_GT(rs::w_fn(-8.0), 0.0);
}

TEST(special_fn, psi_and_w_against_quadrature) {
  for (double x = -24.0; x <= 6.0; x += 0.375) {
    const double ref_psi = oracle::psi(x);
    const double ref_w = oracle::w_fn(x);
    EXPECT_LE(std::abs(rs::psi(x) - ref_psi), 1e-11 * ref_psi + 1e-300) << x;
    EXPECT_LE(std::abs(rs::w_fn(x) - ref_w), 1e-11 * ref_w + 1e-300) << x;
  }
}

TEST(special_fn, derivative_chain) {
  const double h = 1e-5;
  for (double x = -6.0; x <= 6.0; x += 0.01) {
    EXPECT_LE(std::abs((rs::psi(x + h) - rs::psi(x - h)) / (2 * h) - rs::phi(x)), 1e-8) << x;
    EXPECT_LE(std::abs((rs::w_fn(x + h) - rs::w_fn(x - h)) / (2 * h) - rs::psi(x)), 1e-8) << x;
  }
}

TEST(special_fn, range_properties) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    EXPECT_GE(rs::phi(x), 0.0);
    EXPECT_LE(rs::phi(x), 1.0);
    EXPECT_GE(rs::psi(x), std::max(0.0, x));
    EXPECT_GE(rs::w_fn(x), 0.0);
  }
}

TEST(special_fn, reflection_identities) {
  for (double x = -5.0; x <= 5.0; x += 0.5) {
    EXPECT_NEAR(rs::psi(x) - rs::psi(-x), x, 1e-14);
    EXPECT_NEAR(rs::w_fn(x) + rs::w_fn(-x), 0.5 * (x * x + 1.0), 1e-13);
  }
}

TEST(special_fn, quantile_inverts_phi) {
  for (double p : {1e-10, 0.025, 0.5, 0.9, 0.975, 0.999, 1 - 1e-12}) {
    EXPECT_NEAR(rs::phi(rs::normal_quantile(p)), p, 1e-14 * std::max(1.0, p));
  }
  EXPECT_THROW(rs::normal_quantile(0.0), rs::Error);
  EXPECT_THROW(rs::normal_quantile(1.0), rs::Error);
}
