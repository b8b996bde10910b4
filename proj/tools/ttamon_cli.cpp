// Command-line front end: run experiments, compare alarm paths, self-test.
//
// Exit codes: 0 success (an alarm firing is a normal outcome), 1 config
// error, 2 runtime error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acceptance_suite.hpp"
#include "ttamon/experiment.hpp"

namespace fs = std::filesystem;
using namespace ttamon;

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<std::string> out;
  std::size_t threads = 0;
};

std::string output_dir(const RunArgs& args, const ExperimentConfig& config) {
  if (args.out) return *args.out;
  if (const char* env = std::getenv("TTAMON_OUT_DIR"); env && *env) return env;
  return config.output.dir;
}

std::string fmt_t(const AlarmSummary& a) {
  if (!a.enabled) return "-";
  return a.fired ? std::to_string(*a.t_min) : "never";
}

int cmd_run(const RunArgs& args) {
  ExperimentConfig config = load_config(args.config);
  if (args.seed) config.seed = *args.seed;
  if (args.reps) config.repetitions = *args.reps;
  config.validate();

  const fs::path dir = output_dir(args, config);
  fs::create_directories(dir);
  const SourceModel source = prepare_source(config);
  if (!source.trained.converged) {
    std::cerr << "warning: source training stopped before convergence (gradient norm "
              << source.trained.gradient_norm << ")\n";
  }

  std::vector<RunSummary> summaries(config.repetitions);
  std::mutex log_mutex;
  for_each_repetition(
      config.repetitions,
      [&](std::size_t i) {
        const std::uint64_t seed = repetition_seed(config, i);
        const fs::path csv_path =
            dir / (config.output.prefix + "_seed" + std::to_string(seed) + ".csv");
        std::ofstream csv(csv_path, std::ios::binary);
        if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
        summaries[i] = run_repetition(config, source, seed, &csv).summary;
        std::lock_guard lock(log_mutex);
        const RunSummary& s = summaries[i];
        std::cout << "seed " << seed << ": steps " << s.steps_run
                  << " t_min a=" << fmt_t(s.alarm(AlarmKind::SupervisedOracle))
                  << " b=" << fmt_t(s.alarm(AlarmKind::Unsupervised))
                  << " tau=" << fmt_t(s.alarm(AlarmKind::Quantile))
                  << " c=" << fmt_t(s.alarm(AlarmKind::NaivePlugin)) << '\n';
      },
      args.threads);

  nlohmann::json runs = nlohmann::json::array();
  for (const RunSummary& s : summaries) runs.push_back(to_json(s));
  const nlohmann::json summary = {
      {"config_hash", config_hash(config)},
      {"config", to_json(config)},
      {"source_training",
       {{"converged", source.trained.converged},
        {"iterations", source.trained.iterations},
        {"gradient_norm", source.trained.gradient_norm}}},
      {"runs", runs},
  };
  const fs::path summary_path = dir / (config.output.prefix + "_summary.json");
  std::ofstream out(summary_path, std::ios::binary);
  out << summary.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + summary_path.string());
  std::cout << "wrote " << config.repetitions << " run(s) to " << dir.string() << '\n';
  return 0;
}

int cmd_compare(const std::string& config_path, std::size_t threads) {
  ExperimentConfig config = load_config(config_path);
  if (!config.diagnostics) throw ConfigError("diagnostics: compare needs diagnostics enabled");
  if (!config.enabled(AlarmKind::SupervisedOracle) || !config.enabled(AlarmKind::Unsupervised)) {
    throw ConfigError("alarms: compare needs supervised_oracle and unsupervised");
  }
  config.terminate_on_alarm = false;
  const SourceModel source = prepare_source(config);
  std::vector<RepetitionResult> results(config.repetitions);
  for_each_repetition(
      config.repetitions,
      [&](std::size_t i) {
        results[i] = run_repetition(config, source, repetition_seed(config, i));
      },
      threads);

  std::size_t total_violations = 0;
  std::size_t order_held = 0;
  std::printf("%-8s %8s %8s %8s %8s %12s %10s\n", "seed", "t_a", "t_b", "t_tau", "t_c",
              "delta_hat", "violations");
  for (const RepetitionResult& r : results) {
    const RunSummary& s = r.summary;
    const auto violations = ordering_violations(r.rows);
    total_violations += violations.size();
    const auto& a = s.alarm(AlarmKind::SupervisedOracle);
    const auto& b = s.alarm(AlarmKind::Unsupervised);
    if (!b.fired || (a.fired && *a.t_min <= *b.t_min)) ++order_held;
    std::printf("%-8llu %8s %8s %8s %8s %12.5f %10zu\n",
                static_cast<unsigned long long>(s.seed), fmt_t(a).c_str(), fmt_t(b).c_str(),
                fmt_t(s.alarm(AlarmKind::Quantile)).c_str(),
                fmt_t(s.alarm(AlarmKind::NaivePlugin)).c_str(), s.final_delta_hat.value_or(0.0),
                violations.size());
    for (const auto& v : violations) {
      std::fprintf(stderr, "ordering violation: seed %llu step %zu L_a=%.10g L_b=%.10g "
                           "delta_hat=%.6g\n",
                   static_cast<unsigned long long>(s.seed), v.step, v.lower_a, v.lower_b,
                   v.delta_hat);
    }
  }
  std::printf("t_min(a) <= t_min(b) on %zu of %zu runs; %zu ordering violations\n", order_held,
              results.size(), total_violations);
  return total_violations == 0 ? 0 : kRuntimeError;
}

int cmd_selftest(double scale, std::size_t threads) {
  acceptance::Options options;
  options.scale = scale;
  options.threads = threads;
  bool all_pass = true;
  for (const auto& r : acceptance::run_all(options)) {
    std::cout << acceptance::format(r) << std::endl;
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential risk monitoring for test-time adaptation on synthetic streams"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run an experiment config and write CSV and summary");
  run->add_option("--config", run_args.config, "Experiment config (JSON)")->required();
  run->add_option("--seed", run_args.seed, "Seed of the first repetition");
  run->add_option("--reps", run_args.reps, "Number of repetitions");
  run->add_option("--out", run_args.out, "Output directory (overrides TTAMON_OUT_DIR)");
  run->add_option("--threads", run_args.threads, "Worker threads (0 = all cores)");

  std::string compare_config;
  std::size_t compare_threads = 0;
  auto* compare = app.add_subcommand("compare", "Check the bound ordering across alarm paths");
  compare->add_option("--config", compare_config, "Experiment config (JSON)")->required();
  compare->add_option("--threads", compare_threads, "Worker threads (0 = all cores)");

  double selftest_scale = 0.1;
  std::size_t selftest_threads = 0;
  auto* selftest = app.add_subcommand("selftest", "Acceptance suite at reduced repetitions");
  selftest->add_option("--scale", selftest_scale, "Fraction of the full repetition counts")
      ->check(CLI::Range(0.0, 1.0));
  selftest->add_option("--threads", selftest_threads, "Worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*compare) return cmd_compare(compare_config, compare_threads);
    if (*selftest) return cmd_selftest(selftest_scale, selftest_threads);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
