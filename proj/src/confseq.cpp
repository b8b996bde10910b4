#include "ttamon/confseq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ttamon/special_functions.hpp"

namespace ttamon {

namespace {

void check_alpha(double alpha, bool allow_one) {
  const bool ok = alpha > 0.0 && (allow_one ? alpha <= 1.0 : alpha < 1.0);
  if (!ok) throw std::domain_error("alpha outside its admissible range");
}

}  // namespace

double hoeffding_width(double alpha, std::size_t n) {
  check_alpha(alpha, true);
  if (n == 0) throw std::domain_error("Hoeffding width needs at least one sample");
  return std::sqrt(std::log(1.0 / alpha) / static_cast<double>(n));
}

double hoeffding_upper(std::span<const double> samples, double alpha, double bound) {
  if (samples.empty()) throw std::domain_error("Hoeffding bound needs at least one sample");
  const double mean =
      std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  return std::clamp(mean + hoeffding_width(alpha, samples.size()), 0.0, bound);
}

double hoeffding_upper_count(std::size_t hits, std::size_t n, double alpha) {
  if (n == 0) throw std::domain_error("Hoeffding bound needs at least one sample");
  if (hits > n) throw std::domain_error("hit count exceeds sample count");
  const double mean = static_cast<double>(hits) / static_cast<double>(n);
  return std::clamp(mean + hoeffding_width(alpha, n), 0.0, 1.0);
}

double hoeffding_upper_indicator(const std::vector<bool>& indicators, double alpha) {
  const auto hits = static_cast<std::size_t>(std::count(indicators.begin(), indicators.end(), true));
  return hoeffding_upper_count(hits, indicators.size(), alpha);
}

// ---------------------------------------------------------------------------

GammaExponentialMixture::GammaExponentialMixture(double rho, double scale, double alpha)
    : rho_(rho), scale_(scale), alpha_(alpha) {
  if (!(rho > 0.0) || !(scale > 0.0)) {
    throw std::domain_error("mixture needs rho > 0 and scale > 0");
  }
  check_alpha(alpha, false);
  log_threshold_ = std::log(1.0 / alpha);
  const double r = rho_ / (scale_ * scale_);
  log_normalizer_ = r * std::log(r) - special::log_gamma(r) - special::log_gamma_p(r, r);
}

double GammaExponentialMixture::optimal_rho(double v_opt, double alpha) {
  if (!(v_opt > 0.0)) throw std::domain_error("intrinsic time must be positive");
  check_alpha(alpha, false);
  const double l = 2.0 * std::log(1.0 / alpha);
  return v_opt / (l + std::log1p(l));
}

double GammaExponentialMixture::log_mixture(double s, double v) const {
  const double c2 = scale_ * scale_;
  const double a = (v + rho_) / c2;
  const double b = (scale_ * s + v + rho_) / c2;
  return log_normalizer_ + special::log_gamma(a) + special::log_gamma_p(a, b) -
         a * std::log(b) + (scale_ * s + v) / c2;
}

double GammaExponentialMixture::boundary(double v, double s_max) const {
  if (!(v >= 0.0)) throw std::domain_error("variance process must be non-negative");
  if (log_mixture(s_max, v) < log_threshold_) return s_max;
  double lo = 0.0;
  double hi = s_max;
  while (hi - lo > kBisectionTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (log_mixture(mid, v) < log_threshold_) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

// ---------------------------------------------------------------------------

EmpiricalBernsteinCS::EmpiricalBernsteinCS(double alpha, double bound)
    : alpha_(alpha),
      bound_(bound),
      v_opt_(kDefaultIntrinsicSamples * bound * bound / 4.0),
      mixture_(GammaExponentialMixture::optimal_rho(v_opt_, alpha), bound, alpha) {
  if (!(bound > 0.0)) throw std::domain_error("loss bound must be positive");
}

double EmpiricalBernsteinCS::intrinsic_time_for_length(std::size_t stream_length, double bound) {
  if (stream_length == 0) throw std::domain_error("declared stream length must be positive");
  return 0.25 * static_cast<double>(stream_length) * bound * bound / 4.0;
}

void EmpiricalBernsteinCS::set_intrinsic_time(double v_opt) {
  if (n_ != 0) throw std::logic_error("intrinsic time must be set before the first observation");
  mixture_ = GammaExponentialMixture(GammaExponentialMixture::optimal_rho(v_opt, alpha_), bound_,
                                     alpha_);
  v_opt_ = v_opt;
}

void EmpiricalBernsteinCS::update(double z) {
  if (!(z >= 0.0 && z <= bound_)) {
    throw std::domain_error("observation outside the loss range");
  }
  const double predicted = n_ == 0 ? bound_ / 2.0 : sum_ / static_cast<double>(n_);
  variance_ += (z - predicted) * (z - predicted);
  sum_ += z;
  ++n_;
}

void EmpiricalBernsteinCS::update(std::span<const double> batch) {
  // Validate first so a bad batch leaves the state untouched.
  for (double z : batch) {
    if (!(z >= 0.0 && z <= bound_)) throw std::domain_error("observation outside the loss range");
  }
  for (double z : batch) update(z);
}

double EmpiricalBernsteinCS::lower() const {
  if (n_ == 0) throw std::domain_error("confidence sequence has no observations");
  // Only boundaries below the running sum can lift the bound above zero, so
  // the search is confined to [0, sum]; anything larger clamps to the floor.
  const double s_max = std::min(sum_, bound_ * static_cast<double>(n_));
  if (s_max <= 0.0) return 0.0;
  const double radius = mixture_.boundary(variance_, s_max);
  return std::clamp((sum_ - radius) / static_cast<double>(n_), 0.0, bound_);
}

}  // namespace ttamon
