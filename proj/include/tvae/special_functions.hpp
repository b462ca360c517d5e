#pragma once

namespace tvae::special {

/// log Gamma(x) for x > 0 (Lanczos, g = 7, n = 9).
double lgamma(double x);

/// psi(x) = d/dx log Gamma(x), x > 0. Recurrence up to x >= 10, then the
/// asymptotic expansion.
double digamma(double x);

/// psi'(x), x > 0.
double trigamma(double x);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

/// x such that P(a, x) = p, for 0 < p < 1.
double gamma_p_inv(double a, double p);

/// log of the Gamma(a, 1) density at x > 0.
double gamma_log_pdf(double a, double x);

/// dP(a, x)/da by central difference (step 1e-4 * max(a, 1), shrunk near 0).
double gamma_p_da(double a, double x);

}  // namespace tvae::special
