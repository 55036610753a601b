#include <cmath>

#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include "chartwave/errors.hpp"
#include "chartwave/intervals.hpp"
#include "chartwave/rng.hpp"
#include "oracles.hpp"

using namespace chartwave;

TEST(Lai, AnalyticSingleObservation) {
  auto e = lai_interval(1, 1, 0.05);
  EXPECT_NEAR(e.lower, 0.025, 1e-10);
  EXPECT_EQ(e.upper, 1.0);
}

TEST(Lai, AnalyticTwoObservations) {
  // 6p(1-p) = 0.05
  const double r = (1 - std::sqrt(1 - 4 * 0.05 / 6)) / 2;
  auto e = lai_interval(2, 1, 0.05);
  EXPECT_NEAR(e.lower, r, 1e-10);
  EXPECT_NEAR(e.upper, 1 - r, 1e-10);
  EXPECT_NEAR(e.lower, 0.00841, 1e-5);
}

TEST(Lai, NoDataIsUnitInterval) {
  auto e = lai_interval(0, 0, 0.01);
  EXPECT_EQ(e.lower, 0.0);
  EXPECT_EQ(e.upper, 1.0);
}

TEST(Lai, EndpointsSolveBoundaryEquation) {
  for (int k : {3, 10, 37, 100, 250}) {
    for (int s = 0; s <= k; s += std::max(1, k / 9)) {
      auto e = lai_interval(k, s, 0.05);
      if (e.lower > 0.0) EXPECT_LT(std::abs(oracle::lai_lhs(k, e.lower, s) - 0.05), 1e-9) << k << ' ' << s;
      if (e.upper < 1.0) EXPECT_LT(std::abs(oracle::lai_lhs(k, e.upper, s) - 0.05), 1e-9) << k << ' ' << s;
    }
  }
}

TEST(Lai, AcceptsRealCounts) {
  auto e = lai_interval(37.4, 29.9, 0.05);
  EXPECT_LT(e.lower, 29.9 / 37.4);
  EXPECT_GT(e.upper, 29.9 / 37.4);
}

TEST(Bayes, Examples) {
  auto none = bayes_interval(0, 0, 0.05);
  EXPECT_NEAR(none.lower, 0.025, 1e-12);
  EXPECT_NEAR(none.upper, 0.975, 1e-12);
  auto one = bayes_interval(1, 1, 0.05);
  EXPECT_NEAR(one.lower, std::sqrt(0.025), 1e-12);
  EXPECT_NEAR(one.upper, std::sqrt(0.975), 1e-12);
}

TEST(Bayes, QuadratureOracleBeta81_21) {
  auto e = bayes_interval(100, 80, 0.05);
  EXPECT_NEAR(oracle::beta_cdf(81, 21, e.lower), 0.025, 1e-8);
  EXPECT_NEAR(oracle::beta_cdf(81, 21, e.upper), 0.975, 1e-8);
}

TEST(Bayes, ContainsPosteriorMean) {
  for (int k : {0, 1, 5, 50, 400})
    for (int s = 0; s <= k; s += std::max(1, k / 7)) {
      auto e = bayes_interval(k, s, 0.05);
      const double mean = (1.0 + s) / (2.0 + k);
      EXPECT_LE(e.lower, mean);
      EXPECT_GE(e.upper, mean);
    }
}

TEST(BetaQuantile, Examples) {
  EXPECT_NEAR(beta_quantile(1, 1, 0.5), 0.5, 1e-12);
  EXPECT_NEAR(beta_quantile(2, 2, 0.5), 0.5, 1e-12);
  EXPECT_NEAR(beta_quantile(2, 1, 0.25), 0.5, 1e-12);
}

TEST(BetaQuantile, RoundTripsIncompleteBeta) {
  Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    const double a = 0.3 + 200 * rng.uniform(), b = 0.3 + 200 * rng.uniform();
    const double q = 1e-4 + (1 - 2e-4) * rng.uniform();
    const double x = beta_quantile(a, b, q);
    EXPECT_NEAR(regularized_incomplete_beta(a, b, x), q, 1e-10) << a << ' ' << b << ' ' << q;
  }
}

TEST(IncompleteBeta, AgreesWithBoost) {
  Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    const double a = 0.2 + 300 * rng.uniform(), b = 0.2 + 300 * rng.uniform(), x = rng.uniform();
    EXPECT_NEAR(regularized_incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-11);
  }
}

TEST(BetaQuantile, RejectsBadArguments) {
  EXPECT_THROW(beta_quantile(0, 1, 0.5), Error);
  EXPECT_THROW(beta_quantile(1, 1, 1.0), Error);
}

TEST(Normal, ConstantDataCollapses) {
  std::vector<double> v(10, 0.7);
  auto e = normal_interval(v, 0, AlphaSchedule{});
  EXPECT_DOUBLE_EQ(e.lower, 0.7);
  EXPECT_DOUBLE_EQ(e.upper, 0.7);
}

TEST(Normal, Symmetric) {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(2 + rng.below(50));
    for (auto& x : v) x = rng.uniform() * 3 - 1;
    auto e = normal_interval(v, rng.below(6), AlphaSchedule{});
    EXPECT_NEAR(e.upper - e.point, e.point - e.lower, 1e-12);
  }
}

TEST(Normal, NeedsTwoValues) {
  std::vector<double> v{1.0};
  EXPECT_THROW(normal_interval(v, 0, AlphaSchedule{}), Error);
}

TEST(AlphaSchedule, GeometricHalving) {
  AlphaSchedule s{0.05};
  EXPECT_DOUBLE_EQ(s.at(0), 0.025);
  EXPECT_DOUBLE_EQ(s.at(1), 0.0125);
  // Exact below alpha; in doubles the sum rounds to alpha after ~50 terms.
  for (std::size_t i = 0; i < 40; ++i) EXPECT_LT(s.spent_through(i), 0.05);
  EXPECT_LE(s.spent_through(200), 0.05);
}

TEST(Widths, NonIncreasingInKAtFixedRatio) {
  for (double ratio : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    double lai_prev = 2, bayes_prev = 2;
    for (int k = 10; k <= 1000; k += 10) {
      const double s = ratio * k;
      const double lw = lai_interval(k, s, 0.05).width(), bw = bayes_interval(k, s, 0.05).width();
      EXPECT_LE(lw, lai_prev + 1e-12) << ratio << ' ' << k;
      EXPECT_LE(bw, bayes_prev + 1e-12) << ratio << ' ' << k;
      lai_prev = lw;
      bayes_prev = bw;
    }
  }
}

TEST(Widths, BayesTighterThanLaiOnGrid) {
  for (int k : {5, 10, 20, 50, 100, 200, 500})
    for (int s = 0; s <= k; ++s)
      EXPECT_LT(bayes_interval(k, s, 0.05).width(), lai_interval(k, s, 0.05).width()) << k << ' ' << s;
}

TEST(BinomialInterval, Dispatch) {
  EXPECT_EQ(binomial_interval(IntervalMethod::lai, 20, 15, 0.05, 0), lai_interval(20, 15, 0.05));
  EXPECT_EQ(binomial_interval(IntervalMethod::bayes, 20, 15, 0.05, 0), bayes_interval(20, 15, 0.05));
  auto n = binomial_interval(IntervalMethod::normal, 20, 15, 0.05, 0);
  EXPECT_GE(n.lower, 0.0);
  EXPECT_LE(n.upper, 1.0);
  EXPECT_NEAR(n.point, 0.75, 1e-12);
}
