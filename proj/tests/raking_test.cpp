#include <numeric>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "chartwave/errors.hpp"
#include "chartwave/raking.hpp"
#include "chartwave/rng.hpp"

using namespace chartwave;

namespace {

RakingFactor factor(std::vector<std::size_t> cats, std::vector<double> pop) { return {std::move(cats), std::move(pop)}; }

}  // namespace

TEST(Raking, MatchingMarginsGiveUnitWeights) {
  std::vector<RakingFactor> f{factor({0, 0, 1, 1}, {0.5, 0.5})};
  for (double w : raking_weights(f, RakingConfig{})) EXPECT_DOUBLE_EQ(w, 1.0);
}

TEST(Raking, PostStratificationRatios) {
  std::vector<RakingFactor> f{factor({0, 1, 1, 1}, {0.5, 0.5})};
  auto w = raking_weights(f, RakingConfig{});
  EXPECT_DOUBLE_EQ(w[0], 2.0);
  for (int i = 1; i < 4; ++i) EXPECT_DOUBLE_EQ(w[i], 2.0 / 3.0);
}

TEST(Raking, BelowThresholdSkipped) {
  std::vector<RakingFactor> f{factor({0, 1}, {0.52, 0.48})};
  for (double w : raking_weights(f, RakingConfig{})) EXPECT_EQ(w, 1.0);
}

TEST(Raking, TwoFactorMarginsMatch) {
  Rng rng(3);
  const std::size_t n = 400;
  std::vector<std::size_t> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.below(4) == 0 ? 0 : rng.below(3);
    b[i] = rng.below(2);
  }
  std::vector<RakingFactor> f{factor(a, {0.3, 0.4, 0.3}), factor(b, {0.55, 0.45})};
  auto w = raking_weights(f, RakingConfig{});
  for (const auto& fac : f) {
    auto got = weighted_margins(fac, w);
    for (std::size_t c = 0; c < got.size(); ++c) EXPECT_NEAR(got[c], fac.population[c], 1e-6);
  }
}

TEST(Raking, WeightsHaveUnitMeanAndRespectCap) {
  // 1 of 50 sampled in stratum 0 against a 40% population share.
  std::vector<std::size_t> cats(50, 1);
  cats[0] = 0;
  std::vector<RakingFactor> f{factor(cats, {0.4, 0.6})};
  RakingConfig cfg;
  auto w = raking_weights(f, cfg);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0) / w.size(), 1.0, 1e-12);
  for (double x : w) EXPECT_LE(x, cfg.weight_cap + 1e-9);
}

TEST(Raking, EmptyPopulatedCategoryUncorrectable) {
  std::vector<RakingFactor> f{factor({0, 0, 0}, {0.5, 0.5})};
  EXPECT_THROW(raking_weights(f, RakingConfig{}), UncorrectableMarginError);
}

TEST(Raking, SingleFactorConvergesToExactRatios) {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 2 + rng.below(4), n = 200 + rng.below(200);
    std::vector<std::size_t> cats(n);
    for (auto& c : cats) c = rng.below(m);
    for (std::size_t c = 0; c < m; ++c) cats[c] = c;  // every category present
    std::vector<double> pop(m);
    for (auto& p : pop) p = 0.5 + rng.uniform();
    double total = std::accumulate(pop.begin(), pop.end(), 0.0);
    for (auto& p : pop) p /= total;
    RakingFactor fac = factor(cats, pop);
    auto sample = sample_margins(fac);
    bool capped = false;
    for (std::size_t c = 0; c < m; ++c) capped = capped || pop[c] / sample[c] > 5.0;
    if (capped) continue;
    std::vector<RakingFactor> f{fac};
    RakingConfig cfg;
    cfg.discrepancy_threshold = 0.0;
    auto w = raking_weights(f, cfg);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(w[i], pop[cats[i]] / sample[cats[i]], 1e-12);
  }
}

TEST(WeightedPpv, Examples) {
  std::vector<int> l{1, 0, 1, 1};
  std::vector<double> unit(4, 1.0);
  EXPECT_DOUBLE_EQ(weighted_ppv(l, unit), 0.75);
  std::vector<int> l2{1, 0};
  std::vector<double> w2{3, 1};
  EXPECT_DOUBLE_EQ(weighted_ppv(l2, w2), 0.75);
  std::vector<int> ones{1, 1, 1};
  std::vector<double> w3{0.2, 4, 1};
  EXPECT_DOUBLE_EQ(weighted_ppv(ones, w3), 1.0);
}

TEST(WeightedPpv, ScaleInvariant) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    std::vector<int> l(20);
    std::vector<double> w(20), w2(20);
    const double c = 0.01 + 50 * rng.uniform();
    for (int i = 0; i < 20; ++i) {
      l[i] = rng.bernoulli(0.6);
      w[i] = 0.1 + rng.uniform();
      w2[i] = c * w[i];
    }
    EXPECT_NEAR(weighted_ppv(l, w), weighted_ppv(l, w2), 1e-12);
  }
}

TEST(EffectiveCounts, Examples) {
  std::vector<int> l(100, 1);
  std::vector<double> unit(100, 1.0);
  EXPECT_DOUBLE_EQ(effective_counts(l, unit).k_eff, 100.0);
  std::vector<int> l2{1, 1, 0, 0};
  std::vector<double> w{2, 2, 1, 1};
  auto e = effective_counts(l2, w);
  EXPECT_NEAR(e.k_eff, 3.6, 1e-12);
  EXPECT_NEAR(e.s_eff, 2.4, 1e-12);
}

TEST(EffectiveCounts, KishBoundedByN) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<int> l(n, 0);
    std::vector<double> w(n);
    for (auto& x : w) x = 0.1 + rng.uniform();
    EXPECT_LE(effective_counts(l, w).k_eff, n + 1e-9);
    std::vector<double> eq(n, 2.5);
    EXPECT_NEAR(effective_counts(l, eq).k_eff, static_cast<double>(n), 1e-9);
  }
}
