#include "ttamon/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <mutex>
#include <ostream>
#include <thread>

#include "ttamon/calibration.hpp"

namespace ttamon {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

AlarmKind ExperimentConfig::deciding_alarm() const {
  for (AlarmKind k : {AlarmKind::Unsupervised, AlarmKind::Quantile, AlarmKind::SupervisedOracle,
                      AlarmKind::NaivePlugin}) {
    if (enabled(k)) return k;
  }
  return AlarmKind::Unsupervised;
}

MonitorConfig ExperimentConfig::resolved_monitor() const {
  MonitorConfig m = monitor;
  if (!m.stream_length) m.stream_length = shift.steps * shift.batch_size;
  return m;
}

void ExperimentConfig::validate() const {
  try {
    source.validate();
    shift.validate(source.dim);
    monitor.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (std::none_of(alarms.begin(), alarms.end(), [](bool b) { return b; })) {
    throw ConfigError("alarms: at least one alarm must be enabled");
  }
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (calibration_size < 2) throw ConfigError("calibration_size must be >= 2");
  if (!(adaptation.learning_rate >= 0.0)) {
    throw ConfigError("adaptation.learning_rate must be >= 0");
  }
  if (!(adaptation.momentum >= 0.0 && adaptation.momentum <= 1.0)) {
    throw ConfigError("adaptation.momentum must be in [0, 1]");
  }
}

namespace {

template <typename T>
T field(const json& obj, const std::string& section, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError((section.empty() ? "" : section + ".") + key + ": wrong type");
  }
}

const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  if (!root.contains(key)) return empty;
  if (!root.at(key).is_object()) throw ConfigError(std::string(key) + ": expected an object");
  return root.at(key);
}

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> known) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) {
      throw ConfigError((where.empty() ? "" : where + ".") + item.key() + ": unknown key");
    }
  }
}

template <typename Fn>
auto parse_enum(const std::string& path, const std::string& value, Fn&& fn) {
  try {
    return fn(value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json alarms = json::array();
  for (std::size_t i = 0; i < kAlarmKinds; ++i) {
    if (c.alarms[i]) alarms.push_back(to_string(static_cast<AlarmKind>(i)));
  }
  json monitor = {
      {"loss", to_string(c.monitor.loss_kind)},
      {"proxy", to_string(c.monitor.proxy_kind)},
      {"epsilon_tol", c.monitor.epsilon_tol},
      {"alpha_source", c.monitor.alpha_source},
      {"alpha_test", c.monitor.alpha_test},
      {"alpha_test_1", c.monitor.alpha_test_1},
      {"alpha_test_2", c.monitor.alpha_test_2},
      {"recalibration_period", c.monitor.recalibration_period},
  };
  if (c.monitor.stream_length) monitor["stream_length"] = *c.monitor.stream_length;
  json source = {
      {"num_classes", c.source.num_classes}, {"dim", c.source.dim},
      {"mean_radius", c.source.mean_radius}, {"variance", c.source.variance},
      {"train_size", c.source.train_size},   {"seed", c.source.seed},
  };
  if (!c.source.class_means.empty()) source["class_means"] = c.source.class_means;
  if (!c.source.class_prior.empty()) source["class_prior"] = c.source.class_prior;
  return {
      {"source", source},
      {"shift",
       {{"kind", to_string(c.shift.kind)},
        {"steps", c.shift.steps},
        {"batch_size", c.shift.batch_size},
        {"max_severity", c.shift.max_severity},
        {"ramp_levels", c.shift.ramp_levels},
        {"noise_per_severity", c.shift.noise_per_severity},
        {"contraction_per_severity", c.shift.contraction_per_severity},
        {"translation_per_severity", c.shift.translation_per_severity}}},
      {"adaptation",
       {{"mode", to_string(c.adaptation.mode)},
        {"learning_rate", c.adaptation.learning_rate},
        {"momentum", c.adaptation.momentum}}},
      {"monitor", monitor},
      {"calibration_size", c.calibration_size},
      {"alarms", alarms},
      {"diagnostics", c.diagnostics},
      {"terminate_on_alarm", c.terminate_on_alarm},
      {"seed", c.seed},
      {"repetitions", c.repetitions},
      {"output", {{"dir", c.output.dir}, {"prefix", c.output.prefix}}},
  };
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig c;
  reject_unknown(j, "",
                 {"source", "shift", "adaptation", "monitor", "calibration_size", "alarms",
                  "diagnostics", "terminate_on_alarm", "seed", "repetitions", "output"});

  const json& src = section(j, "source");
  reject_unknown(src, "source",
                 {"num_classes", "dim", "mean_radius", "variance", "train_size", "seed",
                  "class_means", "class_prior"});
  c.source.num_classes = field(src, "source", "num_classes", c.source.num_classes);
  c.source.dim = field(src, "source", "dim", c.source.dim);
  c.source.mean_radius = field(src, "source", "mean_radius", c.source.mean_radius);
  c.source.variance = field(src, "source", "variance", c.source.variance);
  c.source.train_size = field(src, "source", "train_size", c.source.train_size);
  c.source.seed = field(src, "source", "seed", c.source.seed);
  c.source.class_means = field(src, "source", "class_means", c.source.class_means);
  c.source.class_prior = field(src, "source", "class_prior", c.source.class_prior);

  const json& sh = section(j, "shift");
  reject_unknown(sh, "shift",
                 {"kind", "steps", "batch_size", "max_severity", "ramp_levels",
                  "noise_per_severity", "contraction_per_severity", "translation_per_severity"});
  c.shift.kind = parse_enum("shift.kind", field<std::string>(sh, "shift", "kind", "none"),
                            shift_kind_from_string);
  c.shift.steps = field(sh, "shift", "steps", c.shift.steps);
  c.shift.batch_size = field(sh, "shift", "batch_size", c.shift.batch_size);
  c.shift.max_severity = field(sh, "shift", "max_severity", c.shift.max_severity);
  c.shift.ramp_levels = field(sh, "shift", "ramp_levels", c.shift.ramp_levels);
  c.shift.noise_per_severity = field(sh, "shift", "noise_per_severity", c.shift.noise_per_severity);
  c.shift.contraction_per_severity =
      field(sh, "shift", "contraction_per_severity", c.shift.contraction_per_severity);
  c.shift.translation_per_severity =
      field(sh, "shift", "translation_per_severity", c.shift.translation_per_severity);

  const json& ad = section(j, "adaptation");
  reject_unknown(ad, "adaptation", {"mode", "learning_rate", "momentum"});
  c.adaptation.mode = parse_enum(
      "adaptation.mode", field<std::string>(ad, "adaptation", "mode", "temperature_bias"),
      adaptation_mode_from_string);
  c.adaptation.learning_rate =
      field(ad, "adaptation", "learning_rate", c.adaptation.learning_rate);
  c.adaptation.momentum = field(ad, "adaptation", "momentum", c.adaptation.momentum);

  const json& mon = section(j, "monitor");
  reject_unknown(mon, "monitor",
                 {"loss", "proxy", "epsilon_tol", "alpha_source", "alpha_test", "alpha_test_1",
                  "alpha_test_2", "stream_length", "recalibration_period"});
  const LossKind loss = parse_enum("monitor.loss",
                                   field<std::string>(mon, "monitor", "loss", "zero_one"),
                                   loss_kind_from_string);
  c.monitor = MonitorConfig::defaults_for(loss);
  c.monitor.proxy_kind = parse_enum("monitor.proxy",
                                    field<std::string>(mon, "monitor", "proxy", "uncertainty"),
                                    proxy_kind_from_string);
  c.monitor.epsilon_tol = field(mon, "monitor", "epsilon_tol", c.monitor.epsilon_tol);
  c.monitor.alpha_source = field(mon, "monitor", "alpha_source", c.monitor.alpha_source);
  c.monitor.alpha_test = field(mon, "monitor", "alpha_test", c.monitor.alpha_test);
  // The split defaults to halves of whatever alpha_test is.
  c.monitor.alpha_test_1 = field(mon, "monitor", "alpha_test_1", c.monitor.alpha_test / 2.0);
  c.monitor.alpha_test_2 =
      field(mon, "monitor", "alpha_test_2", c.monitor.alpha_test - c.monitor.alpha_test_1);
  if (mon.contains("stream_length")) {
    c.monitor.stream_length = field<std::size_t>(mon, "monitor", "stream_length", 0);
  }
  c.monitor.recalibration_period =
      field(mon, "monitor", "recalibration_period", c.monitor.recalibration_period);

  c.calibration_size = field(j, "", "calibration_size", c.calibration_size);
  if (j.contains("alarms")) {
    if (!j.at("alarms").is_array()) throw ConfigError("alarms: expected an array of names");
    c.alarms.fill(false);
    for (std::size_t i = 0; i < j.at("alarms").size(); ++i) {
      const json& name = j.at("alarms").at(i);
      if (!name.is_string()) throw ConfigError("alarms[" + std::to_string(i) + "]: expected a string");
      const AlarmKind k = parse_enum("alarms[" + std::to_string(i) + "]",
                                     name.get<std::string>(), alarm_kind_from_string);
      c.alarms[static_cast<std::size_t>(k)] = true;
    }
  }
  c.diagnostics = field(j, "", "diagnostics", c.diagnostics);
  c.terminate_on_alarm = field(j, "", "terminate_on_alarm", c.terminate_on_alarm);
  c.seed = field(j, "", "seed", c.seed);
  c.repetitions = field(j, "", "repetitions", c.repetitions);
  const json& out = section(j, "output");
  reject_unknown(out, "output", {"dir", "prefix"});
  c.output.dir = field(out, "output", "dir", c.output.dir);
  c.output.prefix = field(out, "output", "prefix", c.output.prefix);

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

namespace {

std::uint64_t fnv1a(const std::string& text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

}  // namespace

std::string config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  // Output location and repetition count do not change any single stream.
  j.erase("output");
  j.erase("repetitions");
  return hex64(fnv1a(j.dump()));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }
std::string opt(const std::optional<bool>& v) { return v ? (*v ? "1" : "0") : std::string(); }

}  // namespace

void write_csv_header(std::ostream& out, const std::string& hash, std::uint64_t seed) {
  out << "# config_hash=" << hash << " seed=" << seed << '\n' << kCsvColumns << '\n';
}

void write_csv_row(std::ostream& out, const StepRow& r) {
  out << r.step << ',' << format_number(r.severity) << ',' << opt(r.empirical_risk) << ','
      << format_number(r.u_hat) << ',' << opt(r.lower_a) << ',' << opt(r.lower_b) << ','
      << opt(r.lower_c) << ',' << opt(r.quantile_bound) << ',' << opt(r.delta_hat) << ','
      << opt(r.phi_a) << ',' << opt(r.phi_b) << ',' << opt(r.phi_tau) << ',' << opt(r.phi_c)
      << ',' << format_number(r.lambda_k) << ',' << format_number(r.tau) << ','
      << format_number(r.collapsed_fraction) << '\n';
}

// ---------------------------------------------------------------------------
// Runner

json to_json(const RunSummary& s) {
  json alarms = json::object();
  for (std::size_t i = 0; i < kAlarmKinds; ++i) {
    const AlarmSummary& a = s.alarms[i];
    if (!a.enabled) continue;
    json entry = {{"fired", a.fired}};
    entry["t_min"] = a.t_min ? json(*a.t_min) : json(nullptr);
    entry["final_bound"] = a.final_bound ? json(*a.final_bound) : json(nullptr);
    alarms[to_string(static_cast<AlarmKind>(i))] = entry;
  }
  auto opt_json = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {
      {"seed", s.seed},
      {"config_hash", s.config_hash},
      {"steps_run", s.steps_run},
      {"terminated", s.terminated},
      {"tau", s.tau},
      {"lambda_source", s.lambda_source},
      {"u_hat", s.u_hat},
      {"alarms", alarms},
      {"final_delta_hat", opt_json(s.final_delta_hat)},
      {"risk",
       {{"final", opt_json(s.final_empirical_risk)},
        {"max", opt_json(s.max_empirical_risk)},
        {"digest", s.risk_digest}}},
      {"degenerate_recalibrations", s.degenerate_recalibrations},
      {"skipped_adaptations", s.skipped_adaptations},
      {"naive_clamped", s.naive_clamped},
  };
}

SourceModel prepare_source(const ExperimentConfig& config) {
  return SourceModel{train_source(config.source)};
}

namespace {

struct Evaluated {
  std::vector<double> proxies;
  std::vector<double> losses;
  std::vector<std::size_t> predictions;
};

double proxy_of(ProxyKind kind, const ToyModel& model, std::span<const double> x,
                const ProbVector& p, std::span<const double> logits) {
  switch (kind) {
    case ProxyKind::Uncertainty: return uncertainty_proxy(p).value;
    case ProxyKind::Energy: return energy_proxy(logits).value;
    case ProxyKind::PrototypeDistance: {
      std::vector<double> xn(model.dim());
      model.normalize(x, xn);
      return prototype_distance_proxy(xn, model.weights()).value;
    }
  }
  return 0.0;
}

// Proxies always; losses only when labels are supplied.
Evaluated evaluate(const ToyModel& model, std::span<const double> features,
                   const std::vector<std::size_t>* labels, LossKind loss, ProxyKind proxy) {
  const std::size_t dim = model.dim();
  const std::size_t n = features.size() / dim;
  Evaluated out;
  out.proxies.reserve(n);
  out.predictions.reserve(n);
  if (labels) out.losses.reserve(n);
  std::vector<double> z(model.num_classes());
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = features.subspan(i * dim, dim);
    model.logits(x, z);
    const ProbVector p = model.predict(x);
    out.proxies.push_back(proxy_of(proxy, model, x, p, z));
    out.predictions.push_back(p.argmax());
    if (labels) out.losses.push_back(evaluate_loss(loss, p, (*labels)[i]).value);
  }
  return out;
}

double max_class_share(const std::vector<std::size_t>& predictions, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t c : predictions) ++counts[c];
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(predictions.size());
}

}  // namespace

RepetitionResult run_repetition(const ExperimentConfig& config, const SourceModel& source,
                                std::uint64_t seed, std::ostream* csv,
                                const BatchHook& on_batch) {
  const MonitorConfig mcfg = config.resolved_monitor();
  const LossKind loss = mcfg.loss_kind;
  const ProxyKind proxy = mcfg.proxy_kind;
  const std::string hash = config_hash(config);

  RepetitionResult result;
  RunSummary& summary = result.summary;
  summary.seed = seed;
  summary.config_hash = hash;
  for (std::size_t i = 0; i < kAlarmKinds; ++i) summary.alarms[i].enabled = config.alarms[i];
  if (csv) {
    write_csv_header(*csv, hash, seed);
    csv->flush();
  }

  // Source losses, proxies, thresholds and the source bound.
  const LabeledSample cal = sample_source(config.source, config.calibration_size, seed);
  ToyModel model = source.trained.model;
  Evaluated cal_eval = evaluate(model, cal.features, &cal.labels, loss, proxy);
  const CalibrationSet source_set(cal_eval.proxies, cal_eval.losses, loss_bound(loss));
  const SourceThresholds thresholds = calibrate_source(source_set);
  ThresholdState threshold_state(thresholds);
  RiskMonitor monitor = RiskMonitor::init_source(source_set, thresholds, mcfg);

  summary.tau = thresholds.tau;
  summary.lambda_source = thresholds.lambda;
  summary.u_hat = monitor.u_hat();

  const bool need_labels = config.enabled(AlarmKind::SupervisedOracle) || config.diagnostics;
  const bool unsupervised_on =
      config.enabled(AlarmKind::Unsupervised) || config.enabled(AlarmKind::Quantile);
  const AlarmKind deciding = config.deciding_alarm();
  std::uint64_t digest = 0xcbf29ce484222325ULL;

  for (std::size_t k = 1; k <= config.shift.steps; ++k) {
    StreamBatch batch = emit_batch(config.source, config.shift, seed, k);
    if (on_batch) on_batch(batch);

    // Adapt on the unlabeled batch.
    AdaptationResult adapted = tta_update(model, batch.features(), config.adaptation);
    model = std::move(adapted.model);
    if (adapted.skipped) ++summary.skipped_adaptations;

    // Recalibrate lambda on the calibration set with the adapted model.
    if ((k - 1) % mcfg.recalibration_period == 0) {
      // Source data keeps source normalization statistics; only the
      // learned parameters carry over from the adapted model.
      ToyModel cal_model = model;
      cal_model.set_normalization(
          {source.trained.model.norm_mean().begin(), source.trained.model.norm_mean().end()},
          {source.trained.model.norm_var().begin(), source.trained.model.norm_var().end()});
      cal_eval = evaluate(cal_model, cal.features, &cal.labels, loss, proxy);
      const CalibrationSet set_k(cal_eval.proxies, cal_eval.losses, loss_bound(loss));
      threshold_state.push(
          recalibrate_proxy(set_k, threshold_state.tau(), threshold_state.current_lambda()));
    } else {
      threshold_state.push({threshold_state.current_lambda(), 0.0, false});
    }
    const double lambda_k = threshold_state.current_lambda();

    // Bounds. Labels only reach the oracle and diagnostics.
    const Evaluated test =
        evaluate(model, batch.features(), need_labels ? &*batch.labels() : nullptr, loss, proxy);
    if (unsupervised_on && !monitor.stopped(AlarmKind::Unsupervised)) {
      monitor.step_unsupervised(test.proxies, lambda_k);
    }
    if (config.enabled(AlarmKind::SupervisedOracle) &&
        !monitor.stopped(AlarmKind::SupervisedOracle)) {
      monitor.step_supervised_oracle(test.losses);
    }
    if (config.enabled(AlarmKind::NaivePlugin) && !monitor.stopped(AlarmKind::NaivePlugin)) {
      monitor.step_naive_plugin(test.proxies);
    }
    if (config.diagnostics) monitor.diagnostics_delta(test.proxies, test.losses, lambda_k);

    const AlarmReport& rep = monitor.report();
    StepRow row;
    row.step = k;
    row.severity = batch.severity();
    row.u_hat = rep.u_hat;
    row.lambda_k = lambda_k;
    row.tau = thresholds.tau;
    row.collapsed_fraction = max_class_share(test.predictions, model.num_classes());
    if (config.enabled(AlarmKind::SupervisedOracle)) {
      row.lower_a = rep.lower_a;
      row.phi_a = rep.alarm(AlarmKind::SupervisedOracle).fired;
    }
    if (config.enabled(AlarmKind::Unsupervised)) {
      row.lower_b = rep.lower_b;
      row.lower_b_tau_scaled = rep.lower_b_tau_scaled;
      row.phi_b = rep.alarm(AlarmKind::Unsupervised).fired;
    }
    if (config.enabled(AlarmKind::Quantile)) {
      row.quantile_bound = rep.quantile_bound;
      row.phi_tau = rep.alarm(AlarmKind::Quantile).fired;
    }
    if (config.enabled(AlarmKind::NaivePlugin)) {
      row.lower_c = rep.lower_c;
      row.phi_c = rep.alarm(AlarmKind::NaivePlugin).fired;
    }
    if (const auto& d = monitor.diagnostics()) {
      row.delta_hat = d->delta_hat;
      row.empirical_risk = d->empirical_risk;
      summary.max_empirical_risk = std::max(summary.max_empirical_risk.value_or(0.0),
                                            d->empirical_risk);
      digest = fnv1a(format_number(d->empirical_risk), digest);
    }
    if (csv) {
      write_csv_row(*csv, row);
      csv->flush();
    }
    result.rows.push_back(row);
    summary.steps_run = k;

    // Stop adapting once the deciding alarm fires.
    if (config.terminate_on_alarm && rep.alarm(deciding).fired) {
      summary.terminated = true;
      break;
    }
  }

  const AlarmReport& rep = monitor.report();
  for (std::size_t i = 0; i < kAlarmKinds; ++i) {
    AlarmSummary& a = summary.alarms[i];
    if (!a.enabled) continue;
    a.fired = rep.alarms[i].fired;
    a.t_min = rep.alarms[i].t_min;
    switch (static_cast<AlarmKind>(i)) {
      case AlarmKind::SupervisedOracle: a.final_bound = rep.lower_a; break;
      case AlarmKind::Unsupervised: a.final_bound = rep.lower_b; break;
      case AlarmKind::Quantile: a.final_bound = rep.quantile_bound; break;
      case AlarmKind::NaivePlugin: a.final_bound = rep.lower_c; break;
    }
  }
  if (const auto& d = monitor.diagnostics()) {
    summary.final_delta_hat = d->delta_hat;
    summary.final_empirical_risk = d->empirical_risk;
    summary.risk_digest = hex64(digest);
  }
  summary.degenerate_recalibrations = threshold_state.degenerate_steps();
  summary.naive_clamped = rep.naive_clamped;
  return result;
}

void for_each_repetition(std::size_t count, const std::function<void(std::size_t)>& worker,
                         std::size_t threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) worker(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          worker(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<OrderingViolation> ordering_violations(const std::vector<StepRow>& rows,
                                                   double tolerance) {
  std::vector<OrderingViolation> out;
  for (const StepRow& r : rows) {
    if (!r.lower_a || !r.lower_b) continue;
    if (r.delta_hat && *r.delta_hat >= 0.0 && *r.lower_b > *r.lower_a + tolerance) {
      out.push_back({r.step, *r.lower_a, *r.lower_b, *r.delta_hat});
    }
    // After the oracle latches its bound is frozen and no longer comparable.
    if (r.phi_a && *r.phi_a) break;
  }
  return out;
}

}  // namespace ttamon
