#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ttamon {

// ---------------------------------------------------------------------------
// Static upper confidence intervals (Hoeffding)
// ---------------------------------------------------------------------------

/// Finite-sample penalty sqrt(log(1/alpha) / n).
double hoeffding_width(double alpha, std::size_t n);

/// Empirical mean plus the Hoeffding width, clamped to [0, bound].
double hoeffding_upper(std::span<const double> samples, double alpha, double bound = 1.0);

/// Same interval for {0,1}-valued observations given as a hit count.
double hoeffding_upper_count(std::size_t hits, std::size_t n, double alpha);
double hoeffding_upper_indicator(const std::vector<bool>& indicators, double alpha);

// ---------------------------------------------------------------------------
// Gamma-exponential conjugate mixture boundary
// ---------------------------------------------------------------------------

/// Mixture of exp(lambda s - psi_E(lambda) v) over a conjugate gamma-type
/// prior on lambda in [0, 1/c), where psi_E(l) = (-log(1 - c l) - c l) / c^2.
///
/// The closed form is
///
///   m(s, v) = (r^r / (Gamma(r) P(r, r)))
///             * Gamma(a) P(a, b) / b^a * exp((c s + v) / c^2),
///
/// with r = rho / c^2, a = (v + rho) / c^2, b = (c s + v + rho) / c^2 and P the
/// regularized lower incomplete gamma function. m is strictly increasing in s
/// for s >= 0, so the boundary {s : m(s, v) = 1/alpha} is found by bisection.
class GammaExponentialMixture {
 public:
  static constexpr double kBisectionTolerance = 1e-9;

  GammaExponentialMixture(double rho, double scale, double alpha);

  /// rho that makes the boundary tightest around intrinsic time v_opt.
  static double optimal_rho(double v_opt, double alpha);

  double rho() const { return rho_; }
  double scale() const { return scale_; }
  double alpha() const { return alpha_; }

  double log_mixture(double s, double v) const;

  /// sup { s in [0, s_max] : m(s, v) < 1/alpha }. Returns s_max when the
  /// mixture stays below 1/alpha on the whole interval.
  double boundary(double v, double s_max) const;

  bool operator==(const GammaExponentialMixture&) const = default;

 private:
  double rho_;
  double scale_;
  double alpha_;
  double log_threshold_;
  double log_normalizer_;
};

// ---------------------------------------------------------------------------
// Conjugate-mixture empirical-Bernstein lower confidence sequence
// ---------------------------------------------------------------------------

/// Anytime-valid lower confidence sequence for the running mean of a stream
/// of observations in [0, M].
///
/// The variance process is V_t = sum_i (z_i - zhat_{i-1})^2 where zhat is the
/// mean of strictly earlier observations (M/2 before any data). State is O(1)
/// and a pure function of the observation sequence. Single writer.
class EmpiricalBernsteinCS {
 public:
  /// Used when no intrinsic time is set: 1000 worst-case variances M^2/4.
  static constexpr double kDefaultIntrinsicSamples = 1000.0;

  EmpiricalBernsteinCS(double alpha, double bound = 1.0);

  /// Intrinsic time from a declared stream length: 25% of the samples at the
  /// worst-case per-sample variance M^2/4.
  static double intrinsic_time_for_length(std::size_t stream_length, double bound = 1.0);

  /// Fixes the mixture tuning. Throws std::logic_error once data has arrived.
  void set_intrinsic_time(double v_opt);

  void update(double z);
  void update(std::span<const double> batch);

  /// (sum - boundary(V_t)) / n clamped to [0, M]. Throws when n == 0.
  double lower() const;

  std::size_t count() const { return n_; }
  double sum() const { return sum_; }
  double mean() const { return n_ == 0 ? 0.0 : sum_ / static_cast<double>(n_); }
  double variance_process() const { return variance_; }
  double alpha() const { return alpha_; }
  double bound() const { return bound_; }
  double intrinsic_time() const { return v_opt_; }
  const GammaExponentialMixture& mixture() const { return mixture_; }

  bool operator==(const EmpiricalBernsteinCS&) const = default;

 private:
  double alpha_;
  double bound_;
  double v_opt_;
  GammaExponentialMixture mixture_;
  std::size_t n_ = 0;
  double sum_ = 0.0;
  double variance_ = 0.0;
};

}  // namespace ttamon
