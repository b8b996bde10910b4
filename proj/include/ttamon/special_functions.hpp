#pragma once

namespace ttamon::special {

/// Natural log of the gamma function for a > 0 (reentrant).
double log_gamma(double a);

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a),
/// for a > 0 and x >= 0. Series expansion below x = a + 1, Lentz continued
/// fraction for the complement above; both iterate to a relative 1e-12.
double gamma_p(double a, double x);

/// log P(a, x), computed without forming P when it would underflow.
double log_gamma_p(double a, double x);

}  // namespace ttamon::special
