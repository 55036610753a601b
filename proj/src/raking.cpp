#include "chartwave/raking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "chartwave/errors.hpp"

namespace chartwave {

namespace {

void check_factor(const RakingFactor& f, std::size_t n) {
  if (f.category_of.size() != n)
    throw InvalidArgumentError("raking factors must cover the same patients");
  if (f.population.empty()) throw InvalidArgumentError("raking factor has no categories");
  double total = 0.0;
  for (double p : f.population) {
    if (!(p >= 0.0)) throw InvalidArgumentError("population margins must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgumentError("population margins must sum to 1");
  for (std::size_t c : f.category_of)
    if (c >= f.population.size()) throw InvalidArgumentError("category index out of range");
}

double max_discrepancy(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Caps weights and hands the trimmed mass to the uncapped ones, repeating
// until the mean is one and nothing exceeds the cap.
void trim_to_cap(std::vector<double>& w, double cap) {
  const double n = static_cast<double>(w.size());
  std::vector<bool> capped(w.size(), false);
  for (std::size_t round = 0; round <= w.size(); ++round) {
    bool changed = false;
    double fixed = 0.0, free_mass = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!capped[i] && w[i] > cap) {
        capped[i] = true;
        changed = true;
      }
      if (capped[i]) {
        w[i] = cap;
        fixed += cap;
      } else {
        free_mass += w[i];
      }
    }
    if (!changed || free_mass <= 0.0) return;
    const double scale = (n - fixed) / free_mass;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (!capped[i]) w[i] *= scale;
  }
}

}  // namespace

void RakingConfig::validate() const {
  std::vector<std::string> v;
  if (!(discrepancy_threshold >= 0.0)) v.emplace_back("raking threshold must be >= 0");
  if (!(weight_cap > 1.0)) v.emplace_back("raking weight cap must exceed 1");
  if (max_iterations < 1) v.emplace_back("raking needs at least one iteration");
  if (!(tolerance > 0.0)) v.emplace_back("raking tolerance must be positive");
  if (!v.empty()) throw ValidationError(std::move(v));
}

std::vector<double> sample_margins(const RakingFactor& factor) {
  std::vector<double> ones(factor.category_of.size(), 1.0);
  return weighted_margins(factor, ones);
}

std::vector<double> weighted_margins(const RakingFactor& factor, std::span<const double> weights) {
  std::vector<double> m(factor.population.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < factor.category_of.size(); ++i) {
    m[factor.category_of[i]] += weights[i];
    total += weights[i];
  }
  if (total > 0.0)
    for (double& x : m) x /= total;
  return m;
}

std::vector<double> raking_weights(std::span<const RakingFactor> factors, const RakingConfig& cfg) {
  cfg.validate();
  if (factors.empty()) return {};
  const std::size_t n = factors.front().category_of.size();
  for (const auto& f : factors) check_factor(f, n);
  std::vector<double> w(n, 1.0);
  if (n == 0) return w;

  std::vector<const RakingFactor*> active;
  for (const auto& f : factors) {
    const auto sample = sample_margins(f);
    if (max_discrepancy(sample, f.population) <= cfg.discrepancy_threshold) continue;
    for (std::size_t c = 0; c < f.population.size(); ++c) {
      if (f.population[c] > 0.0 && sample[c] == 0.0)
        throw UncorrectableMarginError("category " + std::to_string(c) +
                                       " has population mass but no sampled patients");
    }
    active.push_back(&f);
  }
  if (active.empty()) return w;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    for (const RakingFactor* f : active) {
      const auto current = weighted_margins(*f, w);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = f->category_of[i];
        w[i] *= f->population[c] / current[c];
      }
    }
    // Population shares sum to one, so a sweep already leaves the weights with
    // mean one; only the cap needs a rescale.
    trim_to_cap(w, cfg.weight_cap);

    double worst = 0.0;
    for (const RakingFactor* f : active)
      worst = std::max(worst, max_discrepancy(weighted_margins(*f, w), f->population));
    if (worst <= cfg.tolerance) break;
  }
  return w;
}

double weighted_ppv(std::span<const int> labels, std::span<const double> weights) {
  if (labels.empty()) throw InvalidArgumentError("weighted ppv of an empty sample");
  if (labels.size() != weights.size())
    throw InvalidArgumentError("labels and weights differ in length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(weights[i] > 0.0)) throw InvalidArgumentError("weights must be positive");
    num += weights[i] * labels[i];
    den += weights[i];
  }
  return num / den;
}

EffectiveCounts effective_counts(std::span<const int> labels, std::span<const double> weights) {
  weighted_ppv(labels, weights);  // argument checks
  double sum = 0.0, sum_sq = 0.0, positive = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    sum += weights[i];
    sum_sq += weights[i] * weights[i];
    positive += weights[i] * labels[i];
  }
  // Written as ratios of sums so unit weights give the raw integer tallies exactly.
  EffectiveCounts out;
  out.k_eff = std::min(sum * sum / sum_sq, static_cast<double>(labels.size()));
  out.s_eff = std::clamp(positive * sum / sum_sq, 0.0, out.k_eff);
  return out;
}

}  // namespace chartwave
