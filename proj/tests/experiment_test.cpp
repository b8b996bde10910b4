#include <algorithm>
#include <atomic>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ttamon/experiment.hpp"

namespace ttamon {
namespace {

using nlohmann::json;

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.shift.kind = ShiftKind::SeverityRamp;
  c.shift.steps = 40;
  c.shift.batch_size = 32;
  c.calibration_size = 400;
  c.terminate_on_alarm = false;
  return c;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string error_of(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = small_config();
  c.source.class_prior = {0.1, 0.2, 0.3, 0.4};
  c.monitor = MonitorConfig::defaults_for(LossKind::Brier);
  c.monitor.proxy_kind = ProxyKind::Energy;
  c.monitor.stream_length = 999;
  c.alarms = {true, false, true, false};
  c.adaptation.mode = AdaptationMode::AllWeights;
  c.output.dir = "somewhere";
  const json j = to_json(c);
  const ExperimentConfig back = config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, ShippedConfigsLoad) {
  std::size_t count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(TTAMON_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 5u);
}

TEST(Config, DefaultsFromEmptyObject) {
  const ExperimentConfig c = config_from_json(json::object());
  EXPECT_EQ(c.shift.kind, ShiftKind::None);
  EXPECT_EQ(c.monitor.alpha_test_1, 0.0875);
  EXPECT_EQ(c.monitor.alpha_test_2, 0.0875);
  EXPECT_EQ(c.monitor.epsilon_tol, 0.05);
  EXPECT_EQ(config_from_json({{"monitor", {{"loss", "brier"}}}}).monitor.epsilon_tol, 0.01);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(error_of({{"monitor", {{"epsilon", 0.1}}}}), "monitor.epsilon: unknown key");
  EXPECT_EQ(error_of({{"sead", 3}}), "sead: unknown key");
  EXPECT_EQ(error_of({{"shift", {{"steps", "many"}}}}), "shift.steps: wrong type");
  EXPECT_NE(error_of({{"shift", {{"kind", "sideways"}}}}).find("shift.kind"), std::string::npos);
  EXPECT_NE(error_of({{"alarms", json::array()}}).find("alarms"), std::string::npos);
  EXPECT_NE(error_of({{"alarms", {"loud"}}}).find("alarms[0]"), std::string::npos);
  EXPECT_NE(error_of({{"repetitions", 0}}).find("repetitions"), std::string::npos);
  EXPECT_NE(error_of({{"monitor", {{"alpha_test_1", 0.1}, {"alpha_test_2", 0.1}}}}).find("alpha_test_1"),
            std::string::npos);
  EXPECT_NE(error_of({{"source", {{"class_means", {0, 0, 0, 0, 0, 0, 0, 0}}}}}).find(
                "class_means"),
            std::string::npos);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, HashIgnoresOutputOnly) {
  ExperimentConfig a = small_config();
  ExperimentConfig b = a;
  b.output.dir = "elsewhere";
  b.repetitions = 17;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Run, CsvSchemaAndHash) {
  const ExperimentConfig c = small_config();
  const SourceModel source = prepare_source(c);
  std::ostringstream csv;
  const RepetitionResult r = run_repetition(c, source, 5, &csv);
  const auto lines = lines_of(csv.str());
  ASSERT_EQ(lines.size(), c.shift.steps + 2);
  EXPECT_EQ(lines[0], "# config_hash=" + config_hash(c) + " seed=5");
  EXPECT_EQ(r.summary.config_hash, config_hash(c));
  EXPECT_EQ(lines[1], kCsvColumns);
  const auto columns = std::count(lines[1].begin(), lines[1].end(), ',');
  for (std::size_t i = 2; i < lines.size(); ++i) {
    EXPECT_EQ(std::count(lines[i].begin(), lines[i].end(), ','), columns) << lines[i];
    EXPECT_EQ(lines[i].find('\r'), std::string::npos);
  }
  EXPECT_EQ(r.rows.size(), c.shift.steps);
  EXPECT_EQ(r.summary.steps_run, c.shift.steps);
  const json summary = to_json(r.summary);
  EXPECT_EQ(summary.at("config_hash"), config_hash(c));
  EXPECT_TRUE(summary.at("alarms").contains("unsupervised"));
}

TEST(Run, DisabledPathsLeaveEmptyFields) {
  ExperimentConfig c = small_config();
  c.alarms = {false, true, false, false};
  c.diagnostics = false;
  std::ostringstream csv;
  run_repetition(c, prepare_source(c), 1, &csv);
  const auto lines = lines_of(csv.str());
  // step,severity,,U_hat,,L_b,,,,,phi_b,,,lambda,tau,collapsed
  const std::string& row = lines[2];
  std::vector<std::string> fields;
  std::stringstream in(row);
  for (std::string f; std::getline(in, f, ',');) fields.push_back(f);
  fields.resize(16);
  EXPECT_TRUE(fields[2].empty());
  EXPECT_FALSE(fields[3].empty());
  EXPECT_TRUE(fields[4].empty());
  EXPECT_FALSE(fields[5].empty());
  EXPECT_TRUE(fields[6].empty());
  EXPECT_TRUE(fields[8].empty());
  EXPECT_FALSE(fields[10].empty());
  EXPECT_TRUE(fields[11].empty());
}

TEST(Run, ByteIdenticalAcrossExecutions) {
  const ExperimentConfig c = small_config();
  std::ostringstream a, b;
  run_repetition(c, prepare_source(c), 9, &a);
  run_repetition(c, prepare_source(c), 9, &b);
  EXPECT_EQ(a.str(), b.str());
  std::ostringstream other;
  run_repetition(c, prepare_source(c), 10, &other);
  EXPECT_NE(a.str(), other.str());
}

TEST(Run, UnsupervisedPathNeverReadsLabels) {
  ExperimentConfig c = small_config();
  c.shift.steps = 120;
  const SourceModel source = prepare_source(c);
  const RepetitionResult clean = run_repetition(c, source, 3);
  const RepetitionResult corrupted = run_repetition(c, source, 3, nullptr, [](StreamBatch& b) {
    std::vector<std::size_t> labels = *b.labels();
    for (std::size_t& y : labels) y = (y + 1) % 4;
    b.set_labels(labels);
  });
  ASSERT_EQ(clean.rows.size(), corrupted.rows.size());
  bool oracle_differs = false;
  for (std::size_t i = 0; i < clean.rows.size(); ++i) {
    EXPECT_EQ(clean.rows[i].lower_b, corrupted.rows[i].lower_b);
    EXPECT_EQ(clean.rows[i].phi_b, corrupted.rows[i].phi_b);
    EXPECT_EQ(clean.rows[i].quantile_bound, corrupted.rows[i].quantile_bound);
    EXPECT_EQ(clean.rows[i].lambda_k, corrupted.rows[i].lambda_k);
    oracle_differs = oracle_differs || clean.rows[i].lower_a != corrupted.rows[i].lower_a;
  }
  EXPECT_TRUE(oracle_differs);
  EXPECT_EQ(clean.summary.alarm(AlarmKind::Unsupervised).t_min,
            corrupted.summary.alarm(AlarmKind::Unsupervised).t_min);
}

TEST(Run, FailureLeavesPartialCsv) {
  const ExperimentConfig c = small_config();
  std::ostringstream csv;
  EXPECT_THROW(run_repetition(c, prepare_source(c), 1, &csv,
                              [](StreamBatch& b) {
                                if (b.step() == 5) throw std::runtime_error("boom");
                              }),
               std::runtime_error);
  EXPECT_EQ(lines_of(csv.str()).size(), 2u + 4u);
}

TEST(Run, TerminatesOnDecidingAlarm) {
  ExperimentConfig c = small_config();
  c.shift.kind = ShiftKind::SuddenSevere;
  c.shift.max_severity = 2.0;
  c.shift.steps = 300;
  c.adaptation.mode = AdaptationMode::Frozen;
  c.terminate_on_alarm = true;
  const RepetitionResult r = run_repetition(c, prepare_source(c), 2);
  ASSERT_TRUE(r.summary.alarm(AlarmKind::Unsupervised).fired);
  EXPECT_TRUE(r.summary.terminated);
  EXPECT_EQ(r.summary.steps_run, *r.summary.alarm(AlarmKind::Unsupervised).t_min);
  EXPECT_EQ(r.rows.size(), r.summary.steps_run);
}

TEST(Ordering, FlagsOnlyLiveStepsWithNonNegativeDelta) {
  std::vector<StepRow> rows(4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].step = i + 1;
    rows[i].lower_a = 0.1;
    rows[i].lower_b = 0.1;
    rows[i].delta_hat = 0.05;
    rows[i].phi_a = false;
  }
  EXPECT_TRUE(ordering_violations(rows).empty());
  rows[0].lower_b = 0.1 + 0.5 * kOrderingTolerance;
  EXPECT_TRUE(ordering_violations(rows).empty());
  rows[1].lower_b = 0.2;
  rows[2].lower_b = 0.2;
  rows[2].delta_hat = -0.01;
  rows[3].lower_b = 0.3;
  rows[2].phi_a = true;
  const auto v = ordering_violations(rows);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].step, 2u);
}

TEST(ForEachRepetition, VisitsEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> seen(50);
  for_each_repetition(seen.size(), [&](std::size_t i) { ++seen[i]; }, 4);
  for (const auto& s : seen) EXPECT_EQ(s.load(), 1);
  EXPECT_THROW(for_each_repetition(
                   10, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }, 3),
               std::runtime_error);
}

}  // namespace
}  // namespace ttamon
