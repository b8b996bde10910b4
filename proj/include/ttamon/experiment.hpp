#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttamon/monitor.hpp"
#include "ttamon/simulator.hpp"

namespace ttamon {

/// Invalid experiment configuration; the message names the field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputConfig {
  std::string dir = "ttamon_out";
  std::string prefix = "run";
};

struct ExperimentConfig {
  SourceSpec source;
  ShiftSchedule shift;
  AdaptationConfig adaptation;
  MonitorConfig monitor;
  std::size_t calibration_size = 1000;
  std::array<bool, kAlarmKinds> alarms{true, true, true, true};
  bool diagnostics = true;
  /// Stop adapting and monitoring once the deciding alarm fires.
  bool terminate_on_alarm = true;
  std::uint64_t seed = 1;
  std::size_t repetitions = 1;
  OutputConfig output;

  bool enabled(AlarmKind kind) const { return alarms[static_cast<std::size_t>(kind)]; }
  /// The alarm that terminates adaptation: unsupervised when enabled.
  AlarmKind deciding_alarm() const;
  /// Monitor settings with the declared stream length filled in.
  MonitorConfig resolved_monitor() const;
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys take defaults; monitor.epsilon_tol defaults per loss kind.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// 16 hex digits of FNV-1a over the canonical JSON of the config.
std::string config_hash(const ExperimentConfig& config);

/// One CSV row. Fields that do not apply stay empty.
struct StepRow {
  std::size_t step = 0;
  double severity = 0.0;
  std::optional<double> empirical_risk;
  double u_hat = 0.0;
  std::optional<double> lower_a;
  std::optional<double> lower_b;
  std::optional<double> lower_c;
  std::optional<double> quantile_bound;
  std::optional<double> delta_hat;
  std::optional<bool> phi_a;
  std::optional<bool> phi_b;
  std::optional<bool> phi_tau;
  std::optional<bool> phi_c;
  double lambda_k = 0.0;
  double tau = 0.0;
  double collapsed_fraction = 0.0;
  /// Not serialized: tau-scaled unsupervised bound.
  std::optional<double> lower_b_tau_scaled;
};

inline constexpr const char* kCsvColumns =
    "step,severity,empirical_risk,U_hat,L_a,L_b,L_c,quantile_bound,delta_hat,phi_a,phi_b,"
    "phi_tau,phi_c,lambda_k,tau,collapsed_fraction";

void write_csv_header(std::ostream& out, const std::string& hash, std::uint64_t seed);
void write_csv_row(std::ostream& out, const StepRow& row);

struct AlarmSummary {
  bool enabled = false;
  bool fired = false;
  std::optional<std::size_t> t_min;
  std::optional<double> final_bound;
};

struct RunSummary {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::size_t steps_run = 0;
  bool terminated = false;
  double tau = 0.0;
  double lambda_source = 0.0;
  double u_hat = 0.0;
  std::array<AlarmSummary, kAlarmKinds> alarms{};
  std::optional<double> final_delta_hat;
  std::optional<double> final_empirical_risk;
  std::optional<double> max_empirical_risk;
  std::string risk_digest;
  std::size_t degenerate_recalibrations = 0;
  std::size_t skipped_adaptations = 0;
  bool naive_clamped = false;

  const AlarmSummary& alarm(AlarmKind k) const { return alarms[static_cast<std::size_t>(k)]; }
};

nlohmann::json to_json(const RunSummary& summary);

struct RepetitionResult {
  RunSummary summary;
  std::vector<StepRow> rows;
};

/// Source model shared by every repetition of one experiment.
struct SourceModel {
  TrainResult trained;
};
SourceModel prepare_source(const ExperimentConfig& config);

/// Calibrate, then adapt and monitor one seeded stream. When `csv` is given,
/// rows are written and flushed as they are produced, so a failure leaves a
/// partial file.
///
/// `on_batch`, when set, sees every emitted batch before it is used.
using BatchHook = std::function<void(StreamBatch&)>;
RepetitionResult run_repetition(const ExperimentConfig& config, const SourceModel& source,
                                std::uint64_t seed, std::ostream* csv = nullptr,
                                const BatchHook& on_batch = nullptr);

/// Seed of repetition `index`: consecutive from the configured seed.
inline std::uint64_t repetition_seed(const ExperimentConfig& config, std::size_t index) {
  return config.seed + index;
}

/// Calls `worker(i)` for i in [0, count), possibly from several threads.
/// The first exception thrown by a worker is rethrown after all finish.
void for_each_repetition(std::size_t count,
                         const std::function<void(std::size_t)>& worker,
                         std::size_t threads = 0);

struct OrderingViolation {
  std::size_t step = 0;
  double lower_a = 0.0;
  double lower_b = 0.0;
  double delta_hat = 0.0;
};

/// Bisection tolerance of the confidence-sequence boundary search.
inline constexpr double kOrderingTolerance = GammaExponentialMixture::kBisectionTolerance;

/// Checks L^b <= L^a + tolerance on every step where both paths were live
/// and the assumption diagnostic was non-negative.
std::vector<OrderingViolation> ordering_violations(const std::vector<StepRow>& rows,
                                                   double tolerance = kOrderingTolerance);

}  // namespace ttamon
