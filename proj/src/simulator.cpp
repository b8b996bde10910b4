#include "ttamon/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace ttamon {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator per (seed, stream, index).
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index));
}

constexpr std::uint64_t kTrainStream = 0x7472616e;
constexpr std::uint64_t kSampleStream = 0x63616c69;
constexpr std::uint64_t kTestStream = 0x74657374;

void draw(const SourceSpec& spec, const std::vector<double>& means,
          const std::vector<double>& prior, std::mt19937_64& rng, std::size_t n,
          std::vector<double>& features, std::vector<std::size_t>& labels) {
  std::discrete_distribution<std::size_t> pick(prior.begin(), prior.end());
  std::normal_distribution<double> noise(0.0, std::sqrt(spec.variance));
  features.resize(n * spec.dim);
  labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = pick(rng);
    labels[i] = c;
    for (std::size_t h = 0; h < spec.dim; ++h) {
      features[i * spec.dim + h] = means[c * spec.dim + h] + noise(rng);
    }
  }
}

void softmax_inplace(std::span<double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : z) v /= total;
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs

std::vector<double> SourceSpec::resolved_means() const {
  if (!class_means.empty()) return class_means;
  std::vector<double> means(num_classes * dim, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (dim == 1) {
      means[c] = mean_radius * (static_cast<double>(c) - 0.5 * static_cast<double>(num_classes - 1));
      continue;
    }
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                         static_cast<double>(num_classes);
    means[c * dim] = mean_radius * std::cos(angle);
    means[c * dim + 1] = mean_radius * std::sin(angle);
  }
  return means;
}

std::vector<double> SourceSpec::resolved_prior() const {
  if (!class_prior.empty()) return class_prior;
  return std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes));
}

void SourceSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("source.num_classes must be >= 2");
  if (dim == 0) throw std::invalid_argument("source.dim must be >= 1");
  if (!(variance > 0.0)) throw std::invalid_argument("source.variance must be > 0");
  if (train_size < num_classes) throw std::invalid_argument("source.train_size too small");
  if (!class_means.empty() && class_means.size() != num_classes * dim) {
    throw std::invalid_argument("source.class_means must have num_classes * dim entries");
  }
  if (!class_prior.empty()) {
    if (class_prior.size() != num_classes) {
      throw std::invalid_argument("source.class_prior must have num_classes entries");
    }
    for (double p : class_prior) {
      if (!(p > 0.0)) throw std::invalid_argument("source.class_prior entries must be > 0");
    }
  }
  const std::vector<double> means = resolved_means();
  for (std::size_t a = 0; a < num_classes; ++a) {
    for (std::size_t b = a + 1; b < num_classes; ++b) {
      if (std::equal(means.begin() + a * dim, means.begin() + (a + 1) * dim,
                     means.begin() + b * dim)) {
        throw std::invalid_argument("source.class_means must be pairwise distinct");
      }
    }
  }
}

const char* to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::None: return "none";
    case ShiftKind::SeverityRamp: return "severity_ramp";
    case ShiftKind::SuddenSevere: return "sudden_severe";
    case ShiftKind::GradualDrift: return "gradual_drift";
  }
  return "unknown";
}

ShiftKind shift_kind_from_string(const std::string_view name) {
  for (ShiftKind k : {ShiftKind::None, ShiftKind::SeverityRamp, ShiftKind::SuddenSevere,
                      ShiftKind::GradualDrift}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown shift kind '" + std::string(name) + "'");
}

double ShiftSchedule::severity(std::size_t k) const {
  if (k < 1 || k > steps) {
    throw std::domain_error("step " + std::to_string(k) + " outside 1.." + std::to_string(steps));
  }
  switch (kind) {
    case ShiftKind::None:
      return 0.0;
    case ShiftKind::SuddenSevere:
      return max_severity;
    case ShiftKind::SeverityRamp: {
      if (ramp_levels < 2) return max_severity;
      const std::size_t level = (k - 1) * ramp_levels / steps;
      return max_severity * static_cast<double>(level) / static_cast<double>(ramp_levels - 1);
    }
    case ShiftKind::GradualDrift:
      if (steps == 1) return max_severity;
      return max_severity * static_cast<double>(k - 1) / static_cast<double>(steps - 1);
  }
  return 0.0;
}

void ShiftSchedule::validate(std::size_t dim) const {
  if (steps == 0) throw std::invalid_argument("shift.steps must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("shift.batch_size must be >= 1");
  if (!(max_severity >= 0.0)) throw std::invalid_argument("shift.max_severity must be >= 0");
  if (!(noise_per_severity >= 0.0)) {
    throw std::invalid_argument("shift.noise_per_severity must be >= 0");
  }
  if (!(contraction_per_severity >= 0.0)) {
    throw std::invalid_argument("shift.contraction_per_severity must be >= 0");
  }
  if (translation_per_severity.size() > dim) {
    throw std::invalid_argument("shift.translation_per_severity longer than source.dim");
  }
}

// ---------------------------------------------------------------------------
// Sampling

StreamBatch::StreamBatch(std::size_t step, double severity, std::size_t dim,
                         std::vector<double> features,
                         std::optional<std::vector<std::size_t>> labels)
    : step_(step), severity_(severity), dim_(dim), features_(std::move(features)),
      labels_(std::move(labels)) {
  if (dim_ == 0 || features_.size() % dim_ != 0) {
    throw std::domain_error("batch features do not match the feature dimension");
  }
  if (labels_ && labels_->size() != features_.size() / dim_) {
    throw std::domain_error("batch has a different number of labels and samples");
  }
}

LabeledSample sample_source(const SourceSpec& spec, std::size_t n, std::uint64_t seed) {
  LabeledSample out;
  out.dim = spec.dim;
  auto rng = make_rng(seed, kSampleStream, 0);
  draw(spec, spec.resolved_means(), spec.resolved_prior(), rng, n, out.features, out.labels);
  return out;
}

StreamBatch emit_batch(const SourceSpec& spec, const ShiftSchedule& schedule, std::uint64_t seed,
                       std::size_t k) {
  const double s = schedule.severity(k);
  auto rng = make_rng(seed, kTestStream, k);
  std::vector<double> features;
  std::vector<std::size_t> labels;
  const std::vector<double> means = spec.resolved_means();
  draw(spec, means, spec.resolved_prior(), rng, schedule.batch_size, features, labels);

  const bool drift = schedule.kind == ShiftKind::GradualDrift;
  const double noise_sd = drift ? 0.0 : s * schedule.noise_per_severity;
  const double pull = drift ? 0.0 : std::min(1.0, s * schedule.contraction_per_severity);
  std::vector<double> centroid(spec.dim, 0.0);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t h = 0; h < spec.dim; ++h) {
      centroid[h] += means[c * spec.dim + h] / static_cast<double>(spec.num_classes);
    }
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t h = 0; h < spec.dim; ++h) {
      double& x = features[i * spec.dim + h];
      x -= pull * (means[labels[i] * spec.dim + h] - centroid[h]);
      if (h < schedule.translation_per_severity.size()) {
        x += s * schedule.translation_per_severity[h];
      }
      // Always draw so the stream layout does not depend on severity.
      x += noise_sd * noise(rng);
    }
  }
  return StreamBatch(k, s, spec.dim, std::move(features), std::move(labels));
}

// ---------------------------------------------------------------------------
// Model

const char* to_string(AdaptationMode mode) {
  switch (mode) {
    case AdaptationMode::Frozen: return "frozen";
    case AdaptationMode::TemperatureBias: return "temperature_bias";
    case AdaptationMode::AllWeights: return "all_weights";
  }
  return "unknown";
}

AdaptationMode adaptation_mode_from_string(const std::string_view name) {
  for (AdaptationMode m :
       {AdaptationMode::Frozen, AdaptationMode::TemperatureBias, AdaptationMode::AllWeights}) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown adaptation mode '" + std::string(name) + "'");
}

ToyModel::ToyModel(std::size_t num_classes, std::size_t dim)
    : num_classes_(num_classes),
      dim_(dim),
      weights_(num_classes * dim, 0.0),
      bias_(num_classes, 0.0),
      norm_mean_(dim, 0.0),
      norm_var_(dim, 1.0) {
  if (num_classes < 2 || dim == 0) throw std::domain_error("model needs C >= 2 and H >= 1");
}

double ToyModel::temperature() const { return std::exp(log_temperature_); }

void ToyModel::set_normalization(std::vector<double> mean, std::vector<double> var) {
  if (mean.size() != dim_ || var.size() != dim_) {
    throw std::domain_error("normalization statistics do not match the feature dimension");
  }
  for (double v : var) {
    if (!(v > 0.0)) throw std::domain_error("normalization variance must be positive");
  }
  norm_mean_ = std::move(mean);
  norm_var_ = std::move(var);
}

void ToyModel::normalize(std::span<const double> x, std::span<double> out) const {
  for (std::size_t h = 0; h < dim_; ++h) out[h] = (x[h] - norm_mean_[h]) / std::sqrt(norm_var_[h]);
}

void ToyModel::logits(std::span<const double> x, std::span<double> out) const {
  std::vector<double> xn(dim_);
  normalize(x, xn);
  const double inv_t = std::exp(-log_temperature_);
  for (std::size_t c = 0; c < num_classes_; ++c) {
    double z = bias_[c];
    for (std::size_t h = 0; h < dim_; ++h) z += weights_[c * dim_ + h] * xn[h];
    out[c] = z * inv_t;
  }
}

ProbVector ToyModel::predict(std::span<const double> x) const {
  std::vector<double> z(num_classes_);
  logits(x, z);
  softmax_inplace(z);
  return ProbVector(std::move(z));
}

std::size_t ToyModel::predict_class(std::span<const double> x) const {
  std::vector<double> z(num_classes_);
  logits(x, z);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

TrainResult train_source(const SourceSpec& spec, const TrainOptions& options) {
  if (!(spec.variance > 0.0) || spec.num_classes < 2 || spec.dim == 0) {
    throw std::domain_error("invalid source spec");
  }
  const std::size_t n = spec.train_size;
  const std::size_t dim = spec.dim;
  const std::size_t classes = spec.num_classes;
  std::vector<double> x;
  std::vector<std::size_t> y;
  auto rng = make_rng(spec.seed, kTrainStream, 0);
  draw(spec, spec.resolved_means(), spec.resolved_prior(), rng, n, x, y);

  std::vector<double> mean(dim, 0.0);
  std::vector<double> var(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < dim; ++h) mean[h] += x[i * dim + h];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < dim; ++h) {
      const double d = x[i * dim + h] - mean[h];
      var[h] += d * d;
    }
  }
  for (double& v : var) v = std::max(v / static_cast<double>(n), 1e-12);

  ToyModel model(classes, dim);
  model.set_normalization(mean, var);
  std::vector<double> xn(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    model.normalize({x.data() + i * dim, dim}, {xn.data() + i * dim, dim});
  }

  TrainResult result{model, false, 0, 0.0};
  std::vector<double> grad_w(classes * dim);
  std::vector<double> grad_b(classes);
  std::vector<double> p(classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    auto w = result.model.weights();
    auto b = result.model.bias();
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = xn.data() + i * dim;
      for (std::size_t c = 0; c < classes; ++c) {
        double z = b[c];
        for (std::size_t h = 0; h < dim; ++h) z += w[c * dim + h] * xi[h];
        p[c] = z;
      }
      softmax_inplace(p);
      for (std::size_t c = 0; c < classes; ++c) {
        const double g = (p[c] - (c == y[i] ? 1.0 : 0.0)) * inv_n;
        grad_b[c] += g;
        for (std::size_t h = 0; h < dim; ++h) grad_w[c * dim + h] += g * xi[h];
      }
    }
    double norm2 = 0.0;
    for (double g : grad_w) norm2 += g * g;
    for (double g : grad_b) norm2 += g * g;
    result.gradient_norm = std::sqrt(norm2);
    result.iterations = it;
    if (result.gradient_norm < options.tolerance) {
      result.converged = true;
      break;
    }
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= options.learning_rate * grad_w[j];
    for (std::size_t c = 0; c < classes; ++c) b[c] -= options.learning_rate * grad_b[c];
    result.iterations = it + 1;
  }
  return result;
}

namespace {
double frobenius_norm(std::span<const double> w) {
  double sq = 0.0;
  for (double v : w) sq += v * v;
  return std::sqrt(sq);
}
}  // namespace

AdaptationResult tta_update(const ToyModel& model, std::span<const double> batch_features,
                            const AdaptationConfig& config) {
  const std::size_t dim = model.dim();
  const std::size_t classes = model.num_classes();
  if (batch_features.empty() || batch_features.size() % dim != 0) {
    throw std::domain_error("batch features do not match the model dimension");
  }
  AdaptationResult result{model, false, 0.0};
  if (config.mode == AdaptationMode::Frozen) return result;

  const std::size_t n = batch_features.size() / dim;
  const double inv_n = 1.0 / static_cast<double>(n);

  // (i) normalization statistics
  std::vector<double> bmean(dim, 0.0);
  std::vector<double> bvar(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < dim; ++h) bmean[h] += batch_features[i * dim + h] * inv_n;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < dim; ++h) {
      const double d = batch_features[i * dim + h] - bmean[h];
      bvar[h] += d * d * inv_n;
    }
  }
  std::vector<double> mean(model.norm_mean().begin(), model.norm_mean().end());
  std::vector<double> var(model.norm_var().begin(), model.norm_var().end());
  const double m = config.momentum;
  for (std::size_t h = 0; h < dim; ++h) {
    mean[h] = (1.0 - m) * mean[h] + m * bmean[h];
    var[h] = std::max((1.0 - m) * var[h] + m * bvar[h], 1e-12);
  }
  result.model.set_normalization(std::move(mean), std::move(var));
  if (config.learning_rate == 0.0) return result;

  // (ii) one gradient step on the mean entropy. With z = (W xn + b) / T,
  // dH/dz_j = -p_j (log p_j + H) for each sample.
  const ToyModel& cur = result.model;
  const double inv_t = 1.0 / cur.temperature();
  std::vector<double> grad_w(classes * dim, 0.0);
  std::vector<double> grad_b(classes, 0.0);
  double grad_log_t = 0.0;
  std::vector<double> xn(dim);
  std::vector<double> z(classes);
  std::vector<double> p(classes);
  for (std::size_t i = 0; i < n; ++i) {
    cur.normalize(batch_features.subspan(i * dim, dim), xn);
    cur.logits(batch_features.subspan(i * dim, dim), z);
    std::copy(z.begin(), z.end(), p.begin());
    softmax_inplace(p);
    double entropy = 0.0;
    for (double pc : p) {
      if (pc > 0.0) entropy -= pc * std::log(pc);
    }
    result.entropy += entropy * inv_n;
    for (std::size_t c = 0; c < classes; ++c) {
      const double log_p = p[c] > 0.0 ? std::log(p[c]) : 0.0;
      const double g = -p[c] * (log_p + entropy) * inv_n;
      grad_b[c] += g * inv_t;
      for (std::size_t h = 0; h < dim; ++h) grad_w[c * dim + h] += g * inv_t * xn[h];
      grad_log_t -= g * z[c];
    }
  }

  bool finite = std::isfinite(grad_log_t);
  for (double g : grad_b) finite = finite && std::isfinite(g);
  for (double g : grad_w) finite = finite && std::isfinite(g);
  if (!finite) {
    result.skipped = true;
    return result;
  }

  const double eta = config.learning_rate;
  ToyModel& out = result.model;
  for (std::size_t c = 0; c < classes; ++c) out.bias()[c] -= eta * grad_b[c];
  if (config.mode == AdaptationMode::AllWeights) {
    // Weight-normalized head: the step may rotate W but not rescale it, so
    // entropy cannot be lowered by sharpening alone.
    const double norm_before = frobenius_norm(out.weights());
    for (std::size_t j = 0; j < grad_w.size(); ++j) out.weights()[j] -= eta * grad_w[j];
    const double norm_after = frobenius_norm(out.weights());
    if (norm_after > 0.0) {
      for (double& w : out.weights()) w *= norm_before / norm_after;
    }
  } else {
    out.set_log_temperature(out.log_temperature() - eta * grad_log_t);
  }
  return result;
}

std::vector<std::size_t> predicted_class_histogram(const ToyModel& model,
                                                   std::span<const double> features) {
  const std::size_t dim = model.dim();
  if (features.size() % dim != 0) {
    throw std::domain_error("features do not match the model dimension");
  }
  std::vector<std::size_t> counts(model.num_classes(), 0);
  for (std::size_t i = 0; i < features.size() / dim; ++i) {
    ++counts[model.predict_class(features.subspan(i * dim, dim))];
  }
  return counts;
}

}  // namespace ttamon
