#include "chartwave/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "chartwave/errors.hpp"

namespace chartwave {

namespace {

constexpr double kFloorSlack = 1e-9;

std::size_t floor_count(double x) {
  return x <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(x + kFloorSlack));
}

std::size_t reservoir_total(const Reservoir& r) {
  return std::accumulate(r.begin(), r.end(), std::size_t{0});
}

// Rescale of targets onto `total` with every entry kept inside [lo, cap]:
// x_s = clamp(lambda * target_s, lo_s, cap_s) with lambda found by bisection.
// Entries with a zero target only take what the others cannot absorb.
std::vector<double> bounded_rescale(const std::vector<double>& target, const std::vector<double>& lo,
                                    const std::vector<double>& cap, double total) {
  const std::size_t m = target.size();
  auto fill = [m](const std::vector<double>& t, const std::vector<double>& low,
                  const std::vector<double>& high, double goal) {
    auto at = [&](double lambda) {
      std::vector<double> x(m);
      for (std::size_t s = 0; s < m; ++s) x[s] = std::clamp(lambda * t[s], low[s], std::max(low[s], high[s]));
      return x;
    };
    auto sum = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
    double hi = 0.0;
    for (std::size_t s = 0; s < m; ++s)
      if (t[s] > 0.0) hi = std::max(hi, high[s] / t[s]);
    if (sum(at(hi)) <= goal) return at(hi);
    double lo_l = 0.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo_l + hi);
      if (sum(at(mid)) < goal) lo_l = mid;
      else hi = mid;
    }
    return at(hi);
  };

  std::vector<double> x = fill(target, lo, cap, total);
  const double placed = std::accumulate(x.begin(), x.end(), 0.0);
  if (placed < total - 1e-9) {
    // Spill the shortfall evenly over entries that still have room.
    std::vector<double> even(m, 0.0);
    for (std::size_t s = 0; s < m; ++s)
      if (cap[s] > x[s]) even[s] = 1.0;
    x = fill(even, x, cap, total);
  }
  return x;
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& x,
                                           const std::vector<std::size_t>& cap, std::size_t total) {
  const std::size_t m = x.size();
  std::vector<std::size_t> out(m);
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < m; ++s) {
    out[s] = std::min(cap[s], static_cast<std::size_t>(std::max(0.0, std::floor(x[s]))));
    assigned += out[s];
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (x[a] - std::floor(x[a])) > (x[b] - std::floor(x[b]));
  });
  while (assigned < total) {
    bool progressed = false;
    for (std::size_t s : order) {
      if (assigned == total) break;
      if (out[s] < cap[s]) {
        ++out[s];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  while (assigned > total) {
    for (auto it = order.rbegin(); it != order.rend() && assigned > total; ++it) {
      if (out[*it] > 0) {
        --out[*it];
        --assigned;
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::stratified1:
      return "stratified1";
    case Strategy::stratified2:
      return "stratified2";
    case Strategy::neyman:
      return "neyman";
    case Strategy::random:
      break;
  }
  return "random";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "random") return Strategy::random;
  if (text == "stratified1") return Strategy::stratified1;
  if (text == "stratified2") return Strategy::stratified2;
  if (text == "neyman") return Strategy::neyman;
  throw InvalidArgumentError("unknown sampling strategy '" + std::string(text) + "'");
}

std::string_view to_string(SdEstimator estimator) {
  return estimator == SdEstimator::mad ? "mad" : "sample_sd";
}

SdEstimator parse_sd_estimator(std::string_view text) {
  if (text == "mad") return SdEstimator::mad;
  if (text == "sample_sd" || text == "sd") return SdEstimator::sample_sd;
  throw InvalidArgumentError("unknown sd estimator '" + std::string(text) + "'");
}

std::string_view to_string(SizeBasis basis) {
  return basis == SizeBasis::validated ? "validated" : "population";
}

SizeBasis parse_size_basis(std::string_view text) {
  if (text == "validated") return SizeBasis::validated;
  if (text == "population") return SizeBasis::population;
  throw InvalidArgumentError("unknown Neyman size basis '" + std::string(text) + "'");
}

std::string_view to_string(AllocationSource source) {
  switch (source) {
    case AllocationSource::first_wave_fallback:
      return "first_wave_fallback";
    case AllocationSource::degenerate_fallback:
      return "degenerate_fallback";
    case AllocationSource::strategy:
      break;
  }
  return "strategy";
}

AllocationSource parse_allocation_source(std::string_view text) {
  if (text == "strategy") return AllocationSource::strategy;
  if (text == "first_wave_fallback") return AllocationSource::first_wave_fallback;
  if (text == "degenerate_fallback") return AllocationSource::degenerate_fallback;
  throw InvalidArgumentError("unknown allocation source '" + std::string(text) + "'");
}

void SamplingPolicy::validate() const {
  if (batch_size < 1) throw ValidationError({"batch size must be at least 1"});
}

void AllocationHistory::add(std::vector<std::size_t> counts) {
  if (counts.size() != strata_) throw InvalidArgumentError("allocation has wrong number of strata");
  per_wave_.push_back(std::move(counts));
}

std::size_t AllocationHistory::wave_total(std::size_t wave) const {
  const auto& w = per_wave_.at(wave);
  return std::accumulate(w.begin(), w.end(), std::size_t{0});
}

std::size_t AllocationHistory::total() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < per_wave_.size(); ++i) t += wave_total(i);
  return t;
}

std::vector<std::size_t> AllocationHistory::spent_per_stratum() const {
  std::vector<std::size_t> spent(strata_, 0);
  for (const auto& w : per_wave_)
    for (std::size_t s = 0; s < strata_; ++s) spent[s] += w[s];
  return spent;
}

std::size_t WaveAllocation::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

WaveAllocation allocate_random(std::size_t batch_size, const Reservoir& reservoir, Rng& rng) {
  WaveAllocation a;
  a.counts.assign(reservoir.size(), 0);
  Reservoir left = reservoir;
  std::size_t pool = reservoir_total(left);
  const std::size_t draws = std::min(batch_size, pool);
  for (std::size_t d = 0; d < draws; ++d) {
    std::uint64_t pick = rng.below(pool);
    std::size_t s = 0;
    while (pick >= left[s]) pick -= left[s++];
    ++a.counts[s];
    --left[s];
    --pool;
  }
  return a;
}

WaveAllocation allocate_stratified_equal(std::size_t batch_size, const Reservoir& reservoir) {
  if (reservoir.empty()) throw InvalidArgumentError("no strata");
  WaveAllocation a;
  const std::size_t per = batch_size / reservoir.size();
  for (std::size_t left : reservoir) a.counts.push_back(std::min(per, left));
  return a;
}

WaveAllocation allocate_stratified_proportional(std::size_t batch_size,
                                                std::span<const double> initial_weights,
                                                const Reservoir& reservoir) {
  if (initial_weights.size() != reservoir.size())
    throw InvalidArgumentError("one weight per stratum required");
  WaveAllocation a;
  for (std::size_t s = 0; s < reservoir.size(); ++s) {
    if (!(initial_weights[s] >= 0.0)) throw InvalidArgumentError("weights must be non-negative");
    a.counts.push_back(
        std::min(floor_count(static_cast<double>(batch_size) * initial_weights[s]), reservoir[s]));
  }
  return a;
}

WaveAllocation allocate_neyman(const AllocationHistory& history, std::size_t batch_size,
                               std::span<const double> sizes, std::span<const double> sds,
                               const SamplingPolicy& policy, const Reservoir& reservoir,
                               std::span<const double> initial_weights) {
  const std::size_t m = reservoir.size();
  if (sizes.size() != m || sds.size() != m || history.strata() != m)
    throw InvalidArgumentError("Neyman inputs disagree on the number of strata");

  std::vector<double> product(m);
  double product_sum = 0.0;
  for (std::size_t s = 0; s < m; ++s) {
    if (!(sizes[s] >= 0.0 && sds[s] >= 0.0))
      throw InvalidArgumentError("stratum sizes and sds must be non-negative");
    product[s] = sizes[s] * sds[s];
    product_sum += product[s];
  }
  if (!(product_sum > 0.0)) {
    auto a = allocate_stratified_proportional(batch_size, initial_weights, reservoir);
    a.source = AllocationSource::degenerate_fallback;
    return a;
  }

  const std::size_t total = std::min(batch_size, reservoir_total(reservoir));
  const double spent_after = static_cast<double>(history.total() + batch_size);
  const auto spent = history.spent_per_stratum();
  const double minimum = static_cast<double>(policy.min_per_stratum);

  std::vector<double> target(m, 0.0), lo(m, 0.0), cap(m, 0.0);
  double lo_sum = 0.0;
  for (std::size_t s = 0; s < m; ++s) {
    if (reservoir[s] == 0) continue;
    const double raw = spent_after * product[s] / product_sum - static_cast<double>(spent[s]);
    target[s] = std::max(raw, minimum);
    cap[s] = static_cast<double>(reservoir[s]);
    lo[s] = std::min(minimum, cap[s]);
    lo_sum += lo[s];
  }
  if (lo_sum > static_cast<double>(total)) std::fill(lo.begin(), lo.end(), 0.0);

  const auto real = bounded_rescale(target, lo, cap, static_cast<double>(total));
  WaveAllocation a;
  a.counts = largest_remainder(real, reservoir, total);
  return a;
}

double estimate_stratum_sd(std::span<const double> values, SdEstimator method) {
  if (values.empty()) throw InvalidArgumentError("sd of an empty sample");
  if (method == SdEstimator::sample_sd) {
    if (values.size() < 2) throw InvalidArgumentError("sample sd needs at least two values");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / (n - 1.0));
  }
  auto median = [](std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    const double upper = v[mid];
    if (v.size() % 2) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lower + upper);
  };
  const double center = median({values.begin(), values.end()});
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double v : values) dev.push_back(std::abs(v - center));
  return 1.4826 * median(std::move(dev));
}

}  // namespace chartwave
