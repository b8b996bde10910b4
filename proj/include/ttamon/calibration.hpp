#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttamon {

/// Raised when the calibration set cannot separate low from high losses.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Paired (proxy, loss) values of one model on the labeled source
/// calibration data.
class CalibrationSet {
 public:
  CalibrationSet(std::vector<double> proxies, std::vector<double> losses, double bound = 1.0);

  std::size_t size() const { return proxies_.size(); }
  std::span<const double> proxies() const { return proxies_; }
  std::span<const double> losses() const { return losses_; }
  double bound() const { return bound_; }

 private:
  std::vector<double> proxies_;
  std::vector<double> losses_;
  double bound_;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Counts with "positive" meaning loss > tau and "flagged" meaning proxy > lambda.
ConfusionCounts confusion_counts(double lambda, double tau, const CalibrationSet& set);

/// 2TP / (2TP + FN + FP), with 0/0 taken as 0.
double f1_from_counts(const ConfusionCounts& counts);
double f1_score(double lambda, double tau, const CalibrationSet& set);

/// Loss threshold candidates: midpoints between consecutive distinct losses.
std::vector<double> tau_candidates(const CalibrationSet& set);

/// Proxy threshold candidates: one value below the minimum, midpoints between
/// consecutive distinct proxies, one value above the maximum. Ascending.
std::vector<double> lambda_candidates(std::span<const double> proxies);

struct SourceThresholds {
  double lambda = 0.0;
  double tau = 0.0;
  double f1 = 0.0;
};

/// Joint F1 argmax over the candidate grid. Ties prefer the smaller tau, then
/// the smaller lambda. Throws CalibrationError when all losses coincide.
SourceThresholds calibrate_source(const CalibrationSet& set);

struct ProxyThreshold {
  double lambda = 0.0;
  double f1 = 0.0;
  /// No loss exceeds tau, so every lambda scores 0 and the previous one is kept.
  bool degenerate = false;
};

/// F1 argmax over lambda with tau held fixed.
ProxyThreshold recalibrate_proxy(const CalibrationSet& set, double tau, double previous_lambda);

/// Loss threshold plus the per-step proxy thresholds lambda_0, lambda_1, ...
class ThresholdState {
 public:
  explicit ThresholdState(SourceThresholds source);

  double tau() const { return tau_; }
  double lambda_source() const { return lambda_source_; }
  /// Most recent proxy threshold (lambda_0 before the first test step).
  double current_lambda() const;
  std::span<const double> step_lambdas() const { return lambdas_; }
  std::size_t degenerate_steps() const { return degenerate_steps_; }

  /// Appends lambda_k for the next test step.
  void push(const ProxyThreshold& threshold);

 private:
  double tau_;
  double lambda_source_;
  std::vector<double> lambdas_;
  std::size_t degenerate_steps_ = 0;
};

}  // namespace ttamon
