#include "ttamon/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ttamon {

const char* to_string(AlarmKind kind) {
  switch (kind) {
    case AlarmKind::SupervisedOracle: return "supervised_oracle";
    case AlarmKind::Unsupervised: return "unsupervised";
    case AlarmKind::Quantile: return "quantile";
    case AlarmKind::NaivePlugin: return "naive_plugin";
  }
  return "unknown";
}

AlarmKind alarm_kind_from_string(const std::string_view name) {
  for (std::size_t i = 0; i < kAlarmKinds; ++i) {
    const auto kind = static_cast<AlarmKind>(i);
    if (name == to_string(kind)) return kind;
  }
  throw std::invalid_argument("unknown alarm '" + std::string(name) + "'");
}

MonitorConfig MonitorConfig::defaults_for(LossKind loss) {
  MonitorConfig config;
  config.loss_kind = loss;
  config.epsilon_tol = loss == LossKind::ZeroOne ? 0.05 : 0.01;
  return config;
}

void MonitorConfig::validate() const {
  auto in_unit = [](double a) { return a > 0.0 && a < 1.0; };
  if (!(epsilon_tol >= 0.0)) throw std::invalid_argument("monitor.epsilon_tol must be >= 0");
  if (!in_unit(alpha_source)) throw std::invalid_argument("monitor.alpha_source must be in (0,1)");
  if (!in_unit(alpha_test)) throw std::invalid_argument("monitor.alpha_test must be in (0,1)");
  if (!in_unit(alpha_test_1)) throw std::invalid_argument("monitor.alpha_test_1 must be in (0,1)");
  if (!in_unit(alpha_test_2)) throw std::invalid_argument("monitor.alpha_test_2 must be in (0,1)");
  if (std::abs(alpha_test_1 + alpha_test_2 - alpha_test) > 1e-12) {
    throw std::invalid_argument("monitor.alpha_test_1 + monitor.alpha_test_2 must equal alpha_test");
  }
  if (alpha_source + alpha_test >= 1.0) {
    throw std::invalid_argument("monitor.alpha_source + monitor.alpha_test must be below 1");
  }
  if (stream_length && *stream_length == 0) {
    throw std::invalid_argument("monitor.stream_length must be positive");
  }
  if (recalibration_period == 0) {
    throw std::invalid_argument("monitor.recalibration_period must be >= 1");
  }
}

double unsupervised_lower_bound(double exceedance_lower, double fp_term_upper, double scale) {
  return scale * std::max(0.0, exceedance_lower - fp_term_upper);
}

bool alarm_condition(double lower, double upper, double epsilon_tol) {
  return lower > upper + epsilon_tol;
}

RiskMonitor::RiskMonitor(const MonitorConfig& config, double tau, double lambda_source)
    : config_(config),
      tau_(tau),
      lambda_source_(lambda_source),
      scale_(config.loss_kind == LossKind::ZeroOne ? 1.0 : tau),
      exceedance_cs_(config.alpha_test_1, 1.0),
      supervised_cs_(config.alpha_test, loss_bound(config.loss_kind)),
      naive_cs_(config.alpha_test, loss_bound(config.loss_kind)) {
  if (config_.stream_length) {
    const std::size_t n = *config_.stream_length;
    const double m = loss_bound(config_.loss_kind);
    exceedance_cs_.set_intrinsic_time(EmpiricalBernsteinCS::intrinsic_time_for_length(n, 1.0));
    supervised_cs_.set_intrinsic_time(EmpiricalBernsteinCS::intrinsic_time_for_length(n, m));
    naive_cs_.set_intrinsic_time(EmpiricalBernsteinCS::intrinsic_time_for_length(n, m));
  }
}

RiskMonitor RiskMonitor::init_source(const CalibrationSet& source,
                                     const SourceThresholds& thresholds,
                                     const MonitorConfig& config) {
  config.validate();
  const double m = loss_bound(config.loss_kind);
  if (!(thresholds.tau > 0.0 && thresholds.tau < m)) {
    throw std::domain_error("loss threshold tau must lie strictly inside the loss range");
  }
  if (source.bound() != m) throw std::domain_error("calibration set bound differs from the loss");

  RiskMonitor monitor(config, thresholds.tau, thresholds.lambda);
  const std::size_t n = source.size();
  std::size_t fp_hits = 0;
  std::size_t high_hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool high = source.losses()[i] > thresholds.tau;
    if (high) ++high_hits;
    if (!high && source.proxies()[i] > thresholds.lambda) ++fp_hits;
  }
  monitor.pfp_source_ = static_cast<double>(fp_hits) / static_cast<double>(n);
  monitor.report_.u_hat = hoeffding_upper(source.losses(), config.alpha_source, m);
  monitor.report_.fp_term_upper = hoeffding_upper_count(fp_hits, n, config.alpha_test_2);
  monitor.report_.u_b_hat =
      monitor.scale_ * hoeffding_upper_count(high_hits, n, config.alpha_source);
  return monitor;
}

bool RiskMonitor::stopped(AlarmKind kind) const {
  return report_.alarm(kind).fired && kind != AlarmKind::Quantile;
}

void RiskMonitor::check_batch(std::size_t size, const char* path) {
  if (size == 0) throw std::domain_error(std::string(path) + ": empty batch");
  if (batch_size_ && *batch_size_ != size) {
    throw std::domain_error(std::string(path) + ": batch size changed from " +
                            std::to_string(*batch_size_) + " to " + std::to_string(size));
  }
  batch_size_ = size;
}

void RiskMonitor::latch(AlarmKind kind, bool condition, std::size_t step) {
  AlarmLatch& a = report_.alarms[static_cast<std::size_t>(kind)];
  if (a.fired || !condition) return;
  a.fired = true;
  a.t_min = step;
}

const AlarmReport& RiskMonitor::step_unsupervised(std::span<const double> proxies,
                                                  double lambda_k) {
  if (stopped(AlarmKind::Unsupervised)) {
    throw MonitorStopped("unsupervised alarm already fired; adaptation was terminated");
  }
  check_batch(proxies.size(), "step_unsupervised");
  std::vector<double> exceed(proxies.size());
  std::transform(proxies.begin(), proxies.end(), exceed.begin(),
                 [&](double u) { return u > lambda_k ? 1.0 : 0.0; });
  exceedance_cs_.update(exceed);
  const std::size_t t = ++steps_[static_cast<std::size_t>(AlarmKind::Unsupervised)];

  const double exc_lower = exceedance_cs_.lower();
  const double unscaled = unsupervised_lower_bound(exc_lower, report_.fp_term_upper, 1.0);
  report_.exceedance_lower = exc_lower;
  report_.lower_b = scale_ * unscaled;
  report_.lower_b_tau_scaled = tau_ * unscaled;
  report_.step = std::max(report_.step, t);
  latch(AlarmKind::Unsupervised,
        alarm_condition(*report_.lower_b, report_.u_hat, config_.epsilon_tol), t);

  if (!report_.alarm(AlarmKind::Quantile).fired) {
    report_.quantile_bound = unscaled;
    latch(AlarmKind::Quantile,
          alarm_condition(unscaled, report_.u_b_hat / scale_, config_.epsilon_tol / scale_), t);
  }
  return report_;
}

const AlarmReport& RiskMonitor::step_supervised_oracle(std::span<const double> losses) {
  if (stopped(AlarmKind::SupervisedOracle)) {
    throw MonitorStopped("supervised oracle alarm already fired");
  }
  if (losses.empty()) {
    throw std::domain_error("step_supervised_oracle needs labeled losses; the stream is label-free");
  }
  check_batch(losses.size(), "step_supervised_oracle");
  supervised_cs_.update(losses);
  const std::size_t t = ++steps_[static_cast<std::size_t>(AlarmKind::SupervisedOracle)];
  report_.lower_a = supervised_cs_.lower();
  report_.step = std::max(report_.step, t);
  latch(AlarmKind::SupervisedOracle,
        alarm_condition(*report_.lower_a, report_.u_hat, config_.epsilon_tol), t);
  return report_;
}

const AlarmReport& RiskMonitor::step_naive_plugin(std::span<const double> proxies) {
  if (stopped(AlarmKind::NaivePlugin)) throw MonitorStopped("naive plugin alarm already fired");
  check_batch(proxies.size(), "step_naive_plugin");
  const double m = loss_bound(config_.loss_kind);
  std::vector<double> clamped(proxies.size());
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    clamped[i] = std::clamp(proxies[i], 0.0, m);
    if (clamped[i] != proxies[i]) report_.naive_clamped = true;
  }
  naive_cs_.update(clamped);
  const std::size_t t = ++steps_[static_cast<std::size_t>(AlarmKind::NaivePlugin)];
  report_.lower_c = naive_cs_.lower();
  report_.step = std::max(report_.step, t);
  latch(AlarmKind::NaivePlugin,
        alarm_condition(*report_.lower_c, report_.u_hat, config_.epsilon_tol), t);
  return report_;
}

const DiagnosticsRecord& RiskMonitor::diagnostics_delta(std::span<const double> proxies,
                                                        std::span<const double> losses,
                                                        double lambda_k) {
  if (proxies.size() != losses.size() || proxies.empty()) {
    throw std::domain_error("diagnostics need one loss per proxy");
  }
  if (!diagnostics_) diagnostics_ = DiagnosticsRecord{0, pfp_source_, 0, 0, pfp_source_, 0};
  std::size_t fp = 0;
  std::size_t fn = 0;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    const bool flagged = proxies[i] > lambda_k;
    const bool high = losses[i] > tau_;
    if (flagged && !high) ++fp;
    if (!flagged && high) ++fn;
    loss_sum += losses[i];
  }
  const double n = static_cast<double>(proxies.size());
  pfp_sum_ += static_cast<double>(fp) / n;
  pfn_sum_ += static_cast<double>(fn) / n;
  risk_sum_ += loss_sum / n;

  DiagnosticsRecord& d = *diagnostics_;
  ++d.steps;
  const double steps = static_cast<double>(d.steps);
  d.mean_pfp = pfp_sum_ / steps;
  d.mean_pfn = pfn_sum_ / steps;
  d.delta_hat = d.pfp_source + (pfn_sum_ - pfp_sum_) / steps;
  d.empirical_risk = risk_sum_ / steps;
  return d;
}

}  // namespace ttamon
