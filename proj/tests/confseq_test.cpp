#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "ttamon/confseq.hpp"

namespace ttamon {
namespace {

TEST(Hoeffding, Examples) {
  std::vector<double> samples(1000, 0.0);
  for (std::size_t i = 0; i < 100; ++i) samples[i] = 1.0;
  const long double w = std::sqrt(std::log(40.0L) / 1000.0L);
  EXPECT_NEAR(hoeffding_upper(samples, 0.025), static_cast<double>(0.1L + w), 1e-15);
  EXPECT_NEAR(hoeffding_upper(samples, 1.0), 0.1, 1e-15);
  const std::vector<double> zeros(4, 0.0);
  EXPECT_NEAR(hoeffding_upper(zeros, std::exp(-1.0)), 0.5, 1e-15);
  EXPECT_THROW(hoeffding_upper(std::vector<double>{}, 0.1), std::domain_error);
  EXPECT_THROW(hoeffding_upper(samples, 0.0), std::domain_error);
}

TEST(Hoeffding, WidthMatchesLongDoubleFormula) {
  const long double expected = std::sqrt(std::log(1.0L / 0.025L) / 1000.0L);
  EXPECT_NEAR(hoeffding_width(0.025, 1000), static_cast<double>(expected), 1e-12);
  EXPECT_NEAR(hoeffding_width(0.025, 1000), 0.060736146190830516, 1e-15);
}

TEST(Hoeffding, IndicatorExamples) {
  std::vector<bool> ind(100, false);
  for (std::size_t i = 0; i < 10; ++i) ind[i] = true;
  EXPECT_NEAR(hoeffding_upper_indicator(ind, 0.0875), 0.1 + std::sqrt(std::log(1 / 0.0875) / 100),
              1e-15);
  EXPECT_NEAR(hoeffding_upper_indicator(ind, 0.0875), 0.256, 1e-3);
  EXPECT_EQ(hoeffding_upper_indicator(std::vector<bool>(50, false), 1.0), 0.0);
  EXPECT_EQ(hoeffding_upper_indicator(std::vector<bool>(50, true), 0.3), 1.0);
}

TEST(Hoeffding, MonotoneInAlphaAndN) {
  double previous = INFINITY;
  for (double alpha : {0.001, 0.01, 0.05, 0.1, 0.3, 0.9}) {
    const double w = hoeffding_width(alpha, 100);
    EXPECT_LT(w, previous);
    previous = w;
  }
  previous = INFINITY;
  for (std::size_t n : {1u, 2u, 10u, 100u, 1000u}) {
    const std::vector<double> s(n, 0.2);
    const double u = hoeffding_upper(s, 0.05);
    EXPECT_LE(u, previous);
    previous = u;
  }
}

// log of the mixture integral evaluated by quadrature. With x = 1 - c*lambda
// the prior density on (0, 1] is proportional to x^(r-1) e^(r(1-x)) and the
// integrand exp(lambda s - psi(lambda) v) becomes x^(v/c^2) e^((1-x)(cs+v)/c^2).
double quadrature_log_mixture(double rho, double c, double s, double v) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double c2 = c * c;
  const double r = rho / c2;
  auto prior = [&](double x) { return std::pow(x, r - 1.0) * std::exp(r * (1.0 - x)); };
  auto weighted = [&](double x) {
    return prior(x) * std::pow(x, v / c2) * std::exp((1.0 - x) * (c * s + v) / c2);
  };
  const double z = integrator.integrate(prior, 0.0, 1.0, 1e-13);
  const double m = integrator.integrate(weighted, 0.0, 1.0, 1e-13);
  return std::log(m) - std::log(z);
}

TEST(GammaExponentialMixture, ClosedFormMatchesQuadrature) {
  for (double c : {1.0, 2.0}) {
    for (double rho : {0.5, 3.0, 10.0}) {
      const GammaExponentialMixture mix(rho, c, 0.1);
      for (double s : {0.0, 0.5, 2.0, 10.0, 25.0}) {
        for (double v : {0.1, 1.0, 5.0, 20.0}) {
          const double expected = quadrature_log_mixture(rho, c, s, v);
          EXPECT_NEAR(mix.log_mixture(s, v), expected, 1e-8 * std::max(1.0, std::abs(expected)))
              << "c=" << c << " rho=" << rho << " s=" << s << " v=" << v;
        }
      }
    }
  }
}

TEST(GammaExponentialMixture, MixtureIsOneAtTheOrigin) {
  const GammaExponentialMixture mix(2.0, 1.0, 0.1);
  EXPECT_NEAR(mix.log_mixture(0.0, 0.0), 0.0, 1e-10);
}

TEST(GammaExponentialMixture, BoundaryMonotoneInVarianceAndConfidence) {
  const double rho = GammaExponentialMixture::optimal_rho(250.0, 0.1);
  for (double alpha_lo : {0.01, 0.05, 0.175}) {
    const GammaExponentialMixture tight(rho, 1.0, alpha_lo * 2.0);
    const GammaExponentialMixture loose(rho, 1.0, alpha_lo);
    double previous = 0.0;
    for (double v = 0.0; v <= 2000.0; v += 25.0) {
      const double b = loose.boundary(v, 1e6);
      EXPECT_GE(b, previous - GammaExponentialMixture::kBisectionTolerance);
      EXPECT_GE(b, tight.boundary(v, 1e6) - GammaExponentialMixture::kBisectionTolerance);
      previous = b;
    }
  }
}

TEST(GammaExponentialMixture, BoundaryHitsThreshold) {
  const GammaExponentialMixture mix(5.0, 1.0, 0.05);
  const double b = mix.boundary(40.0, 1e6);
  EXPECT_NEAR(mix.log_mixture(b, 40.0), std::log(20.0), 1e-6);
  EXPECT_EQ(mix.boundary(40.0, 1.0), 1.0);
}

TEST(GammaExponentialMixture, RejectsBadParameters) {
  EXPECT_THROW(GammaExponentialMixture(0.0, 1.0, 0.1), std::domain_error);
  EXPECT_THROW(GammaExponentialMixture(1.0, -1.0, 0.1), std::domain_error);
  EXPECT_THROW(GammaExponentialMixture(1.0, 1.0, 1.0), std::domain_error);
  EXPECT_THROW(GammaExponentialMixture::optimal_rho(0.0, 0.1), std::domain_error);
}

TEST(EmpiricalBernsteinCS, VarianceProcessExamples) {
  EmpiricalBernsteinCS cs(0.175);
  cs.update(0.5);
  EXPECT_EQ(cs.count(), 1u);
  EXPECT_EQ(cs.variance_process(), 0.0);
  cs.update(1.0);
  EXPECT_DOUBLE_EQ(cs.variance_process(), 0.25);
}

TEST(EmpiricalBernsteinCS, BatchingInvariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(64), b(64);
  for (double& x : a) x = u(rng);
  for (double& x : b) x = u(rng);
  std::vector<double> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());

  EmpiricalBernsteinCS two_calls(0.1);
  two_calls.update(a);
  two_calls.update(b);
  EmpiricalBernsteinCS one_call(0.1);
  one_call.update(ab);
  EmpiricalBernsteinCS scalar(0.1);
  for (double x : ab) scalar.update(x);
  EXPECT_EQ(two_calls, one_call);
  EXPECT_EQ(one_call, scalar);
  EXPECT_EQ(two_calls.lower(), one_call.lower());
}

TEST(EmpiricalBernsteinCS, FirstStepBoundIsZero) {
  for (double alpha : {0.01, 0.05, 0.1, 0.175, 0.2}) {
    for (double z : {0.0, 0.5, 1.0}) {
      EmpiricalBernsteinCS cs(alpha);
      cs.update(z);
      EXPECT_EQ(cs.lower(), 0.0) << "alpha=" << alpha << " z=" << z;
    }
  }
}

TEST(EmpiricalBernsteinCS, UniformStreamConvergesBelowMean) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EmpiricalBernsteinCS cs(0.175);
  for (int i = 0; i < 10000; ++i) cs.update(u(rng));
  EXPECT_GE(cs.lower(), 0.45);
  EXPECT_LE(cs.lower(), 0.5);
}

TEST(EmpiricalBernsteinCS, Preconditions) {
  EmpiricalBernsteinCS cs(0.1);
  EXPECT_THROW(cs.lower(), std::domain_error);
  EXPECT_THROW(cs.set_intrinsic_time(0.0), std::domain_error);
  EXPECT_THROW(cs.update(1.5), std::domain_error);
  EXPECT_THROW(cs.update(-0.1), std::domain_error);
  cs.set_intrinsic_time(100.0);
  cs.update(0.3);
  EXPECT_THROW(cs.set_intrinsic_time(200.0), std::logic_error);
}

TEST(EmpiricalBernsteinCS, IntrinsicTimeRule) {
  EXPECT_DOUBLE_EQ(EmpiricalBernsteinCS::intrinsic_time_for_length(10000), 625.0);
  EXPECT_DOUBLE_EQ(EmpiricalBernsteinCS::intrinsic_time_for_length(10000, 2.0), 2500.0);
  EXPECT_DOUBLE_EQ(EmpiricalBernsteinCS(0.1).intrinsic_time(), 250.0);
}

TEST(EmpiricalBernsteinCS, Deterministic) {
  auto run = [] {
    std::mt19937_64 rng(17);
    std::bernoulli_distribution b(0.3);
    EmpiricalBernsteinCS cs(0.05);
    std::vector<double> bounds;
    for (int i = 0; i < 500; ++i) {
      cs.update(b(rng) ? 1.0 : 0.0);
      bounds.push_back(cs.lower());
    }
    return bounds;
  };
  EXPECT_EQ(run(), run());
}

// Fraction of Bernoulli(0.5) streams whose lower bound ever exceeds 0.5,
// plus a hard check that the bound never exceeds the running mean.
double miscoverage(std::size_t streams, std::size_t length, double alpha,
                   std::optional<double> v_opt, std::uint64_t seed) {
  std::size_t misses = 0;
  for (std::size_t s = 0; s < streams; ++s) {
    std::mt19937_64 rng(seed + s);
    std::bernoulli_distribution b(0.5);
    EmpiricalBernsteinCS cs(alpha);
    if (v_opt) cs.set_intrinsic_time(*v_opt);
    bool missed = false;
    for (std::size_t t = 0; t < length; ++t) {
      cs.update(b(rng) ? 1.0 : 0.0);
      const double lower = cs.lower();
      EXPECT_LE(lower, cs.mean());
      if (lower > 0.5) missed = true;
    }
    if (missed) ++misses;
  }
  return static_cast<double>(misses) / static_cast<double>(streams);
}

TEST(EmpiricalBernsteinCS, CoverageHoldsForDifferentTunings) {
  const std::size_t streams = 150;
  const double alpha = 0.175;
  const double slack = 3.0 * std::sqrt(alpha * (1 - alpha) / streams);
  EXPECT_LE(miscoverage(streams, 2000, alpha, std::nullopt, 1000), alpha + slack);
  EXPECT_LE(miscoverage(streams, 2000, alpha, 20.0, 5000), alpha + slack);
  EXPECT_LE(miscoverage(streams, 2000, alpha, 5000.0, 9000), alpha + slack);
}

}  // namespace
}  // namespace ttamon
