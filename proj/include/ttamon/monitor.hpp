#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "ttamon/calibration.hpp"
#include "ttamon/confseq.hpp"
#include "ttamon/losses.hpp"

namespace ttamon {

/// Raised when a path is stepped after its alarm latched.
class MonitorStopped : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class AlarmKind { SupervisedOracle = 0, Unsupervised = 1, Quantile = 2, NaivePlugin = 3 };
inline constexpr std::size_t kAlarmKinds = 4;
const char* to_string(AlarmKind kind);
AlarmKind alarm_kind_from_string(const std::string_view name);

struct MonitorConfig {
  LossKind loss_kind = LossKind::ZeroOne;
  ProxyKind proxy_kind = ProxyKind::Uncertainty;
  double epsilon_tol = 0.05;
  double alpha_source = 0.025;
  double alpha_test = 0.175;
  /// Budget of the exceedance confidence sequence.
  double alpha_test_1 = 0.0875;
  /// Budget of the source false-positive term.
  double alpha_test_2 = 0.0875;
  /// Planned number of test samples (steps * batch size); tunes the
  /// confidence sequences when present.
  std::optional<std::size_t> stream_length;
  std::size_t recalibration_period = 1;

  /// Defaults: eps_tol 0.05 for 0-1 loss and 0.01 for Brier.
  static MonitorConfig defaults_for(LossKind loss);

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Per-alarm latch. Once fired, nothing in it changes.
struct AlarmLatch {
  bool fired = false;
  std::optional<std::size_t> t_min;
};

/// Snapshot of every bound and alarm after the most recent step.
struct AlarmReport {
  std::size_t step = 0;
  double u_hat = 0.0;
  /// Scaled source bound of the probability-of-high-loss test.
  double u_b_hat = 0.0;
  std::optional<double> lower_a;
  std::optional<double> lower_b;
  /// The same unsupervised bound always scaled by tau (general-loss form).
  std::optional<double> lower_b_tau_scaled;
  /// Unscaled exceedance bound, compared by the quantile alarm.
  std::optional<double> quantile_bound;
  std::optional<double> lower_c;
  std::optional<double> exceedance_lower;
  double fp_term_upper = 0.0;
  std::array<AlarmLatch, kAlarmKinds> alarms{};
  /// Set when the naive path had to clamp a proxy into the loss range.
  bool naive_clamped = false;

  const AlarmLatch& alarm(AlarmKind kind) const { return alarms[static_cast<std::size_t>(kind)]; }
};

/// Label-using diagnostics of the proxy assumption. Never feeds an alarm.
struct DiagnosticsRecord {
  std::size_t steps = 0;
  double pfp_source = 0.0;
  double mean_pfp = 0.0;
  double mean_pfn = 0.0;
  /// PFP_0 + mean_k (PFN_k - PFP_k); non-negative when the assumption holds.
  double delta_hat = 0.0;
  /// Running empirical test risk of the adapted models.
  double empirical_risk = 0.0;
};

/// tau-or-1 times (exceedance lower bound - false-positive upper bound), floored at 0.
double unsupervised_lower_bound(double exceedance_lower, double fp_term_upper, double scale);

/// lower > upper + eps_tol
bool alarm_condition(double lower, double upper, double epsilon_tol);

/// All sequential tests of one stream. Single writer: each path may be
/// stepped once per test step, and a latched path refuses further steps.
class RiskMonitor {
 public:
  /// Source side of the monitor from the source model's calibration values.
  static RiskMonitor init_source(const CalibrationSet& source, const SourceThresholds& thresholds,
                                 const MonitorConfig& config);

  const MonitorConfig& config() const { return config_; }
  double tau() const { return tau_; }
  double lambda_source() const { return lambda_source_; }
  /// 1 for 0-1 loss, tau otherwise.
  double scale() const { return scale_; }
  double u_hat() const { return report_.u_hat; }
  double pfp_source() const { return pfp_source_; }
  const AlarmReport& report() const { return report_; }
  const std::optional<DiagnosticsRecord>& diagnostics() const { return diagnostics_; }
  bool stopped(AlarmKind kind) const;

  /// Feeds 1[u > lambda_k] into the exceedance sequence and evaluates the
  /// unsupervised and quantile alarms.
  const AlarmReport& step_unsupervised(std::span<const double> proxies, double lambda_k);

  /// Label-using oracle on the adapted models' losses.
  const AlarmReport& step_supervised_oracle(std::span<const double> losses);

  /// Proxies used as if they were losses; clamped to the loss range.
  const AlarmReport& step_naive_plugin(std::span<const double> proxies);

  const DiagnosticsRecord& diagnostics_delta(std::span<const double> proxies,
                                             std::span<const double> losses, double lambda_k);

 private:
  RiskMonitor(const MonitorConfig& config, double tau, double lambda_source);

  void check_batch(std::size_t size, const char* path);
  void latch(AlarmKind kind, bool condition, std::size_t step);

  MonitorConfig config_;
  double tau_;
  double lambda_source_;
  double scale_;
  double pfp_source_ = 0.0;
  std::optional<std::size_t> batch_size_;

  EmpiricalBernsteinCS exceedance_cs_;
  EmpiricalBernsteinCS supervised_cs_;
  EmpiricalBernsteinCS naive_cs_;
  std::array<std::size_t, kAlarmKinds> steps_{};

  AlarmReport report_;
  std::optional<DiagnosticsRecord> diagnostics_;
  double pfp_sum_ = 0.0;
  double pfn_sum_ = 0.0;
  double risk_sum_ = 0.0;
};

}  // namespace ttamon
