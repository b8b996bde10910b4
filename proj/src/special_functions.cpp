#include "ttamon/special_functions.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ttamon::special {

namespace {

constexpr double kTolerance = 1e-12;
constexpr int kMaxIterations = 100000;
constexpr double kTiny = 1e-300;

// lgamma(a) - [(a - 1/2) log a - a + log(2 pi) / 2], Stirling series for a >= 20.
double stirling_correction(double a) {
  const double r = 1.0 / a;
  const double r2 = r * r;
  return r * (1.0 / 12 - r2 * (1.0 / 360 - r2 * (1.0 / 1260 - r2 * (1.0 / 1680 - r2 / 1188))));
}

// log of x^a e^{-x} / Gamma(a), the common prefactor of both expansions.
// For large a the direct form cancels terms of size a log a, so it is
// rewritten around x = a as a (log1p(t) - t) with t = (x - a) / a.
double log_prefactor(double a, double x) {
  if (a < 20.0) return a * std::log(x) - x - log_gamma(a);
  const double t = (x - a) / a;
  const double log1pmx = t > -0.5 && t < 0.5 ? std::log1p(t) - t : std::log(x / a) - t;
  return a * log1pmx + 0.5 * std::log(a / (2.0 * M_PI)) - stirling_correction(a);
}

// sum_{n>=0} x^n / (a (a+1) ... (a+n)); P(a, x) = prefactor * series.
double log_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int i = 0; i < kMaxIterations; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kTolerance) {
      return log_prefactor(a, x) + std::log(sum);
    }
  }
  throw std::runtime_error("incomplete gamma series did not converge");
}

// Q(a, x) via the modified Lentz continued fraction.
double log_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kTolerance) return log_prefactor(a, x) + std::log(h);
  }
  throw std::runtime_error("incomplete gamma continued fraction did not converge");
}

void check_args(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || !std::isfinite(a)) {
    throw std::domain_error("incomplete gamma requires a > 0 and x >= 0");
  }
}

}  // namespace

double log_gamma(double a) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(a, &sign);
#else
  return std::lgamma(a);
#endif
}

double log_gamma_p(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return log_series(a, x);
  return std::log1p(-std::exp(log_continued_fraction(a, x)));
}

double gamma_p(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return std::exp(log_series(a, x));
  return -std::expm1(log_continued_fraction(a, x));
}

}  // namespace ttamon::special
