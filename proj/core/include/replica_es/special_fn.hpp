#pragma once

// Scalar special functions of the replica solution.
//
//   g(x)   piecewise potential measure: 0 (x >= 0), x^2 (-1 <= x <= 0), -2x-1 (x < -1)
//   phi    standard normal CDF
//   psi    psi(x) = x phi(x) + pdf(x), the first integral of phi
//   w_fn   w_fn(x) = (x^2+1)/2 phi(x) + x/2 pdf(x), the first integral of psi
//
// psi(x) = E[(x - Z)_+] and w_fn(x) = E[(x - Z)_+^2] / 2 for Z ~ N(0,1), which is
// how the left tails are evaluated without cancellation.

namespace replica_es {

double g(double x) noexcept;
double g_prime(double x) noexcept;

/// Standard normal density.
double normal_pdf(double x) noexcept;

/// Standard normal CDF. Accepts +-infinity.
double phi(double x) noexcept;

/// Upper tail 1 - phi(x), accurate for large positive x.
double phi_upper(double x) noexcept;

double psi(double x) noexcept;
double w_fn(double x) noexcept;

/// Inverse of phi on (0, 1).
double normal_quantile(double p);

namespace detail {
// Ratio U_n(m) / U_{n-1}(m) of upper partial moments U_n(m) = E[(Z - m)_+^n] / n!,
// with U_{-1} = pdf(m). Continued fraction, meant for m >= 2.
double upper_moment_ratio(int n, double m) noexcept;
}  // namespace detail

}  // namespace replica_es
