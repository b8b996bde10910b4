#include "ttamon/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ttamon {

CalibrationSet::CalibrationSet(std::vector<double> proxies, std::vector<double> losses,
                               double bound)
    : proxies_(std::move(proxies)), losses_(std::move(losses)), bound_(bound) {
  if (proxies_.size() != losses_.size()) {
    throw std::domain_error("calibration proxies and losses differ in length");
  }
  if (proxies_.size() < 2) throw std::domain_error("calibration set needs at least two samples");
  for (std::size_t i = 0; i < losses_.size(); ++i) {
    if (!(losses_[i] >= 0.0 && losses_[i] <= bound_)) {
      throw std::domain_error("calibration loss outside the loss range");
    }
    if (!std::isfinite(proxies_[i])) throw std::domain_error("calibration proxy is not finite");
  }
}

ConfusionCounts confusion_counts(double lambda, double tau, const CalibrationSet& set) {
  ConfusionCounts counts;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const bool flagged = set.proxies()[i] > lambda;
    const bool high = set.losses()[i] > tau;
    if (flagged && high) ++counts.tp;
    if (!flagged && high) ++counts.fn;
    if (flagged && !high) ++counts.fp;
  }
  return counts;
}

double f1_from_counts(const ConfusionCounts& counts) {
  const std::size_t denom = 2 * counts.tp + counts.fn + counts.fp;
  if (denom == 0) return 0.0;
  return static_cast<double>(2 * counts.tp) / static_cast<double>(denom);
}

double f1_score(double lambda, double tau, const CalibrationSet& set) {
  return f1_from_counts(confusion_counts(lambda, tau, set));
}

namespace {

std::vector<double> sorted_distinct(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// F1 as the exact fraction 2TP / (2TP + FN + FP), compared by cross
// multiplication so that ties are detected without rounding.
struct Fraction {
  std::size_t num = 0;
  std::size_t den = 1;

  static Fraction of(const ConfusionCounts& c) {
    const std::size_t den = 2 * c.tp + c.fn + c.fp;
    return den == 0 ? Fraction{} : Fraction{2 * c.tp, den};
  }
  bool greater_than(const Fraction& other) const { return num * other.den > other.num * den; }
};

struct SweepResult {
  double lambda = 0.0;
  Fraction f1;
};

// Best lambda for a fixed partition into high/low losses. `order` sorts the
// proxies ascending. Moving lambda upward past a group of equal proxies turns
// those samples from flagged into unflagged.
SweepResult sweep_lambda(std::span<const double> proxies, const std::vector<std::size_t>& order,
                         const std::vector<bool>& high) {
  ConfusionCounts counts;
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    if (high[i]) {
      ++counts.tp;
    } else {
      ++counts.fp;
    }
  }
  const double lo = proxies[order.front()];
  const double hi = proxies[order.back()];
  SweepResult best{lo - 1.0, Fraction::of(counts)};

  std::size_t pos = 0;
  while (pos < order.size()) {
    const double value = proxies[order[pos]];
    while (pos < order.size() && proxies[order[pos]] == value) {
      if (high[order[pos]]) {
        --counts.tp;
        ++counts.fn;
      } else {
        --counts.fp;
      }
      ++pos;
    }
    const double lambda = pos < order.size() ? 0.5 * (value + proxies[order[pos]]) : hi + 1.0;
    const Fraction f1 = Fraction::of(counts);
    if (f1.greater_than(best.f1)) best = {lambda, f1};
  }
  return best;
}

std::vector<std::size_t> proxy_order(std::span<const double> proxies) {
  std::vector<std::size_t> order(proxies.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return proxies[a] < proxies[b]; });
  return order;
}

std::vector<bool> high_losses(const CalibrationSet& set, double tau) {
  std::vector<bool> high(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) high[i] = set.losses()[i] > tau;
  return high;
}

}  // namespace

std::vector<double> tau_candidates(const CalibrationSet& set) {
  const std::vector<double> distinct = sorted_distinct(set.losses());
  std::vector<double> out;
  for (std::size_t i = 1; i < distinct.size(); ++i) {
    out.push_back(0.5 * (distinct[i - 1] + distinct[i]));
  }
  return out;
}

std::vector<double> lambda_candidates(std::span<const double> proxies) {
  if (proxies.empty()) throw std::domain_error("no proxies to build candidates from");
  const std::vector<double> distinct = sorted_distinct(proxies);
  std::vector<double> out{distinct.front() - 1.0};
  for (std::size_t i = 1; i < distinct.size(); ++i) {
    out.push_back(0.5 * (distinct[i - 1] + distinct[i]));
  }
  out.push_back(distinct.back() + 1.0);
  return out;
}

SourceThresholds calibrate_source(const CalibrationSet& set) {
  const std::vector<double> taus = tau_candidates(set);
  if (taus.empty()) {
    throw CalibrationError(
        "degenerate calibration: all " + std::to_string(set.size()) +
        " calibration losses are identical, so no loss threshold separates them");
  }
  const std::vector<std::size_t> order = proxy_order(set.proxies());
  bool have_best = false;
  SweepResult best;
  double best_tau = 0.0;
  for (double tau : taus) {
    const SweepResult r = sweep_lambda(set.proxies(), order, high_losses(set, tau));
    if (!have_best || r.f1.greater_than(best.f1)) {
      best = r;
      best_tau = tau;
      have_best = true;
    }
  }
  return {best.lambda, best_tau,
          static_cast<double>(best.f1.num) / static_cast<double>(best.f1.den)};
}

ProxyThreshold recalibrate_proxy(const CalibrationSet& set, double tau, double previous_lambda) {
  const std::vector<bool> high = high_losses(set, tau);
  if (std::find(high.begin(), high.end(), true) == high.end()) {
    return {previous_lambda, 0.0, true};
  }
  const SweepResult r = sweep_lambda(set.proxies(), proxy_order(set.proxies()), high);
  return {r.lambda, static_cast<double>(r.f1.num) / static_cast<double>(r.f1.den), false};
}

ThresholdState::ThresholdState(SourceThresholds source)
    : tau_(source.tau), lambda_source_(source.lambda) {}

double ThresholdState::current_lambda() const {
  return lambdas_.empty() ? lambda_source_ : lambdas_.back();
}

void ThresholdState::push(const ProxyThreshold& threshold) {
  lambdas_.push_back(threshold.lambda);
  if (threshold.degenerate) ++degenerate_steps_;
}

}  // namespace ttamon
