#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ttamon/calibration.hpp"

namespace ttamon {
namespace {

// Exhaustive double loop over the candidate grid, kept deliberately naive:
// counts are recomputed from scratch for every (tau, lambda) pair.
struct BruteForce {
  double lambda = 0.0;
  double tau = 0.0;
  std::size_t num = 0;
  std::size_t den = 1;
};

std::vector<double> distinct_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<double> grid_lambdas(const std::vector<double>& proxies) {
  const auto d = distinct_sorted(proxies);
  std::vector<double> out{d.front() - 1.0};
  for (std::size_t i = 1; i < d.size(); ++i) out.push_back(0.5 * (d[i - 1] + d[i]));
  out.push_back(d.back() + 1.0);
  return out;
}

std::pair<std::size_t, std::size_t> f1_fraction(const std::vector<double>& proxies,
                                                const std::vector<double>& losses, double lambda,
                                                double tau) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    const bool flag = proxies[i] > lambda;
    const bool high = losses[i] > tau;
    tp += flag && high;
    fp += flag && !high;
    fn += !flag && high;
  }
  const std::size_t den = 2 * tp + fp + fn;
  return den == 0 ? std::pair<std::size_t, std::size_t>{0, 1} : std::pair{2 * tp, den};
}

BruteForce brute_force_lambda(const std::vector<double>& proxies,
                              const std::vector<double>& losses, double tau) {
  BruteForce best;
  bool first = true;
  for (double lambda : grid_lambdas(proxies)) {
    const auto [num, den] = f1_fraction(proxies, losses, lambda, tau);
    if (first || num * best.den > best.num * den) best = {lambda, tau, num, den};
    first = false;
  }
  return best;
}

std::optional<BruteForce> brute_force_source(const std::vector<double>& proxies,
                                             const std::vector<double>& losses) {
  const auto d = distinct_sorted(losses);
  std::optional<BruteForce> best;
  for (std::size_t i = 1; i < d.size(); ++i) {
    const BruteForce r = brute_force_lambda(proxies, losses, 0.5 * (d[i - 1] + d[i]));
    if (!best || r.num * best->den > best->num * r.den) best = r;
  }
  return best;
}

struct RandomSet {
  std::vector<double> proxies;
  std::vector<double> losses;
};

RandomSet random_set(std::mt19937_64& rng, bool binary) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 200)(rng);
  // Coarse grids on some sets force ties in both proxies and losses.
  const bool coarse = std::bernoulli_distribution(0.5)(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomSet s;
  for (std::size_t i = 0; i < n; ++i) {
    double loss = binary ? (u(rng) < 0.3 ? 1.0 : 0.0) : u(rng) * u(rng);
    if (!binary && coarse) loss = std::round(loss * 8.0) / 8.0;
    double proxy = 0.6 * loss + 0.7 * u(rng);
    if (coarse) proxy = std::round(proxy * 10.0) / 10.0;
    s.proxies.push_back(proxy);
    s.losses.push_back(loss);
  }
  return s;
}

TEST(F1Score, Examples) {
  const CalibrationSet set({0.9, 0.8, 0.7, 0.1}, {1.0, 1.0, 0.0, 0.0});
  const ConfusionCounts c = confusion_counts(0.75, 0.5, set);
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.fp, 0u);
  EXPECT_EQ(c.fn, 0u);
  EXPECT_EQ(f1_score(0.75, 0.5, set), 1.0);

  const CalibrationSet low({0.3, 0.6}, {0.1, 0.2});
  EXPECT_EQ(f1_score(0.5, 0.5, low), 0.0);

  const CalibrationSet separated({0.1, 0.2, 0.8, 0.9}, {0.0, 0.0, 1.0, 1.0});
  EXPECT_EQ(f1_score(0.5, 0.5, separated), 1.0);
}

TEST(CalibrateSource, BinaryExample) {
  const CalibrationSet set({0.1, 0.2, 0.8, 0.9}, {0.0, 0.0, 1.0, 1.0});
  const SourceThresholds t = calibrate_source(set);
  EXPECT_DOUBLE_EQ(t.lambda, 0.5);
  EXPECT_DOUBLE_EQ(t.tau, 0.5);
  EXPECT_EQ(t.f1, 1.0);
  EXPECT_EQ(tau_candidates(set), std::vector<double>{0.5});
}

TEST(CalibrateSource, IdenticalLossesThrow) {
  const CalibrationSet set({0.1, 0.5, 0.9}, {0.0, 0.0, 0.0});
  EXPECT_THROW(calibrate_source(set), CalibrationError);
  try {
    calibrate_source(set);
  } catch (const CalibrationError& e) {
    EXPECT_NE(std::string(e.what()).find("identical"), std::string::npos);
  }
}

TEST(Candidates, MidpointsAndEnds) {
  const std::vector<double> proxies{0.4, 0.2, 0.4, 0.8};
  EXPECT_EQ(lambda_candidates(proxies), (std::vector<double>{0.2 - 1.0, 0.5 * (0.2 + 0.4), 0.5 * (0.4 + 0.8), 0.8 + 1.0}));
}

TEST(CalibrateSource, MatchesBruteForce) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const RandomSet s = random_set(rng, trial % 2 == 0);
    const CalibrationSet set(s.proxies, s.losses);
    const auto expected = brute_force_source(s.proxies, s.losses);
    if (!expected) {
      EXPECT_THROW(calibrate_source(set), CalibrationError);
      continue;
    }
    const SourceThresholds got = calibrate_source(set);
    EXPECT_EQ(got.tau, expected->tau) << "trial " << trial;
    EXPECT_EQ(got.lambda, expected->lambda) << "trial " << trial;
    EXPECT_EQ(got.f1, static_cast<double>(expected->num) / static_cast<double>(expected->den));
  }
}

TEST(RecalibrateProxy, MatchesBruteForce) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const RandomSet s = random_set(rng, trial % 2 == 1);
    const CalibrationSet set(s.proxies, s.losses);
    const double tau = trial % 2 == 1 ? 0.5 : 0.1 + 0.3 * (trial % 3);
    const bool any_high = std::any_of(s.losses.begin(), s.losses.end(),
                                      [&](double z) { return z > tau; });
    const ProxyThreshold got = recalibrate_proxy(set, tau, 0.123);
    if (!any_high) {
      EXPECT_TRUE(got.degenerate);
      EXPECT_EQ(got.lambda, 0.123);
      continue;
    }
    const BruteForce expected = brute_force_lambda(s.proxies, s.losses, tau);
    EXPECT_FALSE(got.degenerate);
    EXPECT_EQ(got.lambda, expected.lambda) << "trial " << trial;
    EXPECT_EQ(got.f1, static_cast<double>(expected.num) / static_cast<double>(expected.den));
  }
}

TEST(RecalibrateProxy, DegenerateKeepsPreviousLambda) {
  const CalibrationSet set({0.1, 0.7, 0.4}, {0.0, 0.0, 0.0});
  const ProxyThreshold t = recalibrate_proxy(set, 0.5, 0.42);
  EXPECT_TRUE(t.degenerate);
  EXPECT_EQ(t.lambda, 0.42);

  ThresholdState state({0.42, 0.5, 1.0});
  state.push(t);
  state.push({0.3, 0.8, false});
  EXPECT_EQ(state.degenerate_steps(), 1u);
  EXPECT_EQ(state.current_lambda(), 0.3);
  EXPECT_EQ(state.lambda_source(), 0.42);
  EXPECT_EQ(state.step_lambdas().size(), 2u);
}

TEST(RecalibrateProxy, UnchangedModelIsIdempotent) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const RandomSet s = random_set(rng, false);
    const CalibrationSet set(s.proxies, s.losses);
    SourceThresholds source;
    try {
      source = calibrate_source(set);
    } catch (const CalibrationError&) {
      continue;
    }
    const ProxyThreshold first = recalibrate_proxy(set, source.tau, source.lambda);
    EXPECT_EQ(first.lambda, source.lambda);
    EXPECT_EQ(recalibrate_proxy(set, source.tau, first.lambda).lambda, first.lambda);
  }
}

TEST(RecalibrateProxy, HalvedProxiesHalveTheThreshold) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const RandomSet s = random_set(rng, true);
    const CalibrationSet set(s.proxies, s.losses);
    SourceThresholds source;
    try {
      source = calibrate_source(set);
    } catch (const CalibrationError&) {
      continue;
    }
    std::vector<double> shrunk = s.proxies;
    for (double& u : shrunk) u *= 0.5;
    const CalibrationSet shrunk_set(shrunk, s.losses);
    const ProxyThreshold k = recalibrate_proxy(shrunk_set, source.tau, source.lambda);
    const auto [lo, hi] = std::minmax_element(s.proxies.begin(), s.proxies.end());
    if (source.lambda > *lo && source.lambda < *hi) {
      EXPECT_EQ(k.lambda, 0.5 * source.lambda) << "trial " << trial;
    }
    for (std::size_t i = 0; i < shrunk.size(); ++i) {
      EXPECT_EQ(s.proxies[i] > source.lambda, shrunk[i] > k.lambda);
    }
    EXPECT_EQ(k.f1, source.f1);
  }
}

TEST(CalibrateSource, InvariantUnderMonotoneProxyMaps) {
  std::mt19937_64 rng(8);
  const std::vector<double (*)(double)> maps{
      [](double u) { return std::exp(3.0 * u); },
      [](double u) { return u * u * u + 2.0 * u - 7.0; },
      [](double u) { return -1.0 / (1.0 + u); },
  };
  for (int trial = 0; trial < 60; ++trial) {
    const RandomSet s = random_set(rng, trial % 2 == 0);
    const CalibrationSet set(s.proxies, s.losses);
    SourceThresholds base;
    try {
      base = calibrate_source(set);
    } catch (const CalibrationError&) {
      continue;
    }
    for (auto f : maps) {
      std::vector<double> mapped = s.proxies;
      for (double& u : mapped) u = f(u);
      const SourceThresholds t = calibrate_source(CalibrationSet(mapped, s.losses));
      EXPECT_EQ(t.f1, base.f1);
      EXPECT_EQ(t.tau, base.tau);
      for (std::size_t i = 0; i < mapped.size(); ++i) {
        EXPECT_EQ(s.proxies[i] > base.lambda, mapped[i] > t.lambda);
      }
    }
  }
}

TEST(CalibrationSet, RejectsBadInput) {
  EXPECT_THROW(CalibrationSet({0.1}, {0.0}), std::domain_error);
  EXPECT_THROW(CalibrationSet({0.1, 0.2}, {0.0}), std::domain_error);
  EXPECT_THROW(CalibrationSet({0.1, 0.2}, {0.0, 1.5}), std::domain_error);
  EXPECT_THROW(CalibrationSet({0.1, NAN}, {0.0, 1.0}), std::domain_error);
}

}  // namespace
}  // namespace ttamon
