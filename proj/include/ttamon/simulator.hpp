#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ttamon/losses.hpp"

namespace ttamon {

/// Gaussian class-conditional source distribution.
struct SourceSpec {
  std::size_t num_classes = 4;
  std::size_t dim = 2;
  /// Row-major num_classes x dim; empty means evenly spaced on a circle of
  /// radius `mean_radius` in the first two coordinates.
  std::vector<double> class_means;
  double mean_radius = 2.5;
  /// Shared isotropic variance.
  double variance = 1.0;
  /// Empty means uniform.
  std::vector<double> class_prior;
  std::size_t train_size = 5000;
  std::uint64_t seed = 1;

  std::vector<double> resolved_means() const;
  std::vector<double> resolved_prior() const;
  /// Structural checks plus pairwise-distinct class means.
  void validate() const;
};

enum class ShiftKind { None, SeverityRamp, SuddenSevere, GradualDrift };
const char* to_string(ShiftKind kind);
ShiftKind shift_kind_from_string(const std::string_view name);

/// Per-step severity of a test stream and how severity corrupts features.
struct ShiftSchedule {
  ShiftKind kind = ShiftKind::None;
  std::size_t steps = 300;
  std::size_t batch_size = 64;
  double max_severity = 5.0;
  /// Number of constant-severity blocks of the ramp (0 .. max_severity).
  std::size_t ramp_levels = 6;
  /// Std of additive isotropic feature noise per unit severity.
  double noise_per_severity = 0.0;
  /// Feature translation per unit severity; padded with zeros to the
  /// feature dimension.
  std::vector<double> translation_per_severity{0.2, 0.0};
  /// Fraction of each class mean's offset from the class centroid removed
  /// per unit severity (capped at 1), pulling the classes together.
  double contraction_per_severity = 0.35;

  /// Severity s_k for 1 <= k <= steps.
  double severity(std::size_t k) const;
  void validate(std::size_t dim) const;
};

/// Labeled features, row-major n x dim.
struct LabeledSample {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
};

/// One time step of a test stream. Labels are held back for oracle and
/// diagnostic consumers; unsupervised code only ever sees `features()`.
class StreamBatch {
 public:
  StreamBatch(std::size_t step, double severity, std::size_t dim, std::vector<double> features,
              std::optional<std::vector<std::size_t>> labels);

  std::size_t step() const { return step_; }
  double severity() const { return severity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return features_.size() / dim_; }
  std::span<const double> features() const { return features_; }
  const std::optional<std::vector<std::size_t>>& labels() const { return labels_; }
  void set_labels(std::optional<std::vector<std::size_t>> labels) { labels_ = std::move(labels); }

 private:
  std::size_t step_;
  double severity_;
  std::size_t dim_;
  std::vector<double> features_;
  std::optional<std::vector<std::size_t>> labels_;
};

LabeledSample sample_source(const SourceSpec& spec, std::size_t n, std::uint64_t seed);

/// Batch k of the stream drawn from the severity-s_k distribution. A pure
/// function of (spec, schedule, seed, k).
StreamBatch emit_batch(const SourceSpec& spec, const ShiftSchedule& schedule, std::uint64_t seed,
                       std::size_t k);

/// Which parameters the entropy step moves. TemperatureBias: temperature and
/// bias. AllWeights: W and bias, with W held at its Frobenius norm and the
/// temperature fixed.
enum class AdaptationMode { Frozen, TemperatureBias, AllWeights };
const char* to_string(AdaptationMode mode);
AdaptationMode adaptation_mode_from_string(const std::string_view name);

struct AdaptationConfig {
  AdaptationMode mode = AdaptationMode::TemperatureBias;
  double learning_rate = 1e-2;
  double momentum = 0.1;
};

/// Linear softmax classifier over standardized features:
/// logits = (W (x - mean) / sqrt(var) + b) / temperature.
class ToyModel {
 public:
  ToyModel(std::size_t num_classes, std::size_t dim);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> weights() { return weights_; }
  std::span<const double> bias() const { return bias_; }
  std::span<double> bias() { return bias_; }
  double temperature() const;
  double log_temperature() const { return log_temperature_; }
  void set_log_temperature(double value) { log_temperature_ = value; }
  std::span<const double> norm_mean() const { return norm_mean_; }
  std::span<const double> norm_var() const { return norm_var_; }
  void set_normalization(std::vector<double> mean, std::vector<double> var);

  void normalize(std::span<const double> x, std::span<double> out) const;
  void logits(std::span<const double> x, std::span<double> out) const;
  ProbVector predict(std::span<const double> x) const;
  std::size_t predict_class(std::span<const double> x) const;

  bool operator==(const ToyModel&) const = default;

 private:
  std::size_t num_classes_;
  std::size_t dim_;
  std::vector<double> weights_;
  std::vector<double> bias_;
  double log_temperature_ = 0.0;
  std::vector<double> norm_mean_;
  std::vector<double> norm_var_;
};

struct TrainResult {
  ToyModel model;
  bool converged = false;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
};

struct TrainOptions {
  double learning_rate = 1.0;
  double tolerance = 1e-6;
  std::size_t max_iterations = 10000;
};

/// Full-batch gradient descent on cross-entropy over a fresh labeled source
/// sample of spec.train_size points. Non-convergence is reported, not thrown.
TrainResult train_source(const SourceSpec& spec, const TrainOptions& options = {});

struct AdaptationResult {
  ToyModel model;
  /// Gradient was not finite; only the normalization statistics moved.
  bool skipped = false;
  double entropy = 0.0;
};

/// One test-time adaptation step: EMA refresh of the normalization
/// statistics, then one gradient step on the mean predictive entropy.
AdaptationResult tta_update(const ToyModel& model, std::span<const double> batch_features,
                            const AdaptationConfig& config);

std::vector<std::size_t> predicted_class_histogram(const ToyModel& model,
                                                   std::span<const double> features);

}  // namespace ttamon
