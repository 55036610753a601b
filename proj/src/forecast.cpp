#include "chartwave/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "chartwave/errors.hpp"
#include "chartwave/rng.hpp"

namespace chartwave {

namespace {

// Linear-interpolation (type 7) empirical quantile of sorted data.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Run {
  std::size_t batches = 0;
  bool hit_horizon = false;
};

Run continue_once(const ContinuationStart& start, const ForecastOptions& opts, Rng& rng) {
  double k = start.k, s = start.s;
  std::optional<IntervalEstimate> prev = start.last_band;
  for (std::size_t b = 1; b <= opts.horizon; ++b) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < start.batch_size; ++i) hits += rng.bernoulli(start.p_hat) ? 1 : 0;
    k += static_cast<double>(start.batch_size);
    s += static_cast<double>(hits);
    auto band = binomial_interval(start.method, k, s, start.alpha, start.completed_waves + b - 1);
    if (start.monotone_bands && prev) {
      const double lo = std::max(prev->lower, band.lower);
      const double hi = std::min(prev->upper, band.upper);
      if (lo <= hi) {
        band.lower = lo;
        band.upper = hi;
      }
    }
    band.point = std::clamp(s / k, band.lower, band.upper);
    prev = band;
    if (is_terminal(evaluate_stopping(band, start.rule).status)) return {b, false};
  }
  return {opts.horizon, true};
}

}  // namespace

std::string_view to_string(ForecastMethod method) {
  return method == ForecastMethod::rate ? "rate" : "simulate";
}

ForecastMethod parse_forecast_method(std::string_view text) {
  if (text == "simulate") return ForecastMethod::simulate;
  if (text == "rate") return ForecastMethod::rate;
  throw InvalidArgumentError("unknown forecast method '" + std::string(text) + "'");
}

ForecastResult simulate_continuations(const ContinuationStart& start, const ForecastOptions& opts) {
  if (opts.replications < 1) throw InvalidArgumentError("forecast needs at least one replication");
  if (start.batch_size < 1) throw InvalidArgumentError("batch size must be at least 1");
  if (!(start.p_hat >= 0.0 && start.p_hat <= 1.0))
    throw InvalidArgumentError("p_hat must lie in [0,1]");

  std::vector<Run> runs(opts.replications);
  auto work = [&](std::size_t first, std::size_t step) {
    for (std::size_t r = first; r < runs.size(); r += step) {
      Rng rng(derive_seed(opts.seed, {hash_string("forecast"), r}));
      runs[r] = continue_once(start, opts, rng);
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, opts.replications));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }

  ForecastResult out;
  out.method = ForecastMethod::simulate;
  out.replications = runs.size();
  std::vector<double> batches;
  batches.reserve(runs.size());
  for (const auto& r : runs) {
    batches.push_back(static_cast<double>(r.batches));
    out.horizon_hits += r.hit_horizon ? 1 : 0;
  }
  out.remaining_batches_point =
      std::accumulate(batches.begin(), batches.end(), 0.0) / static_cast<double>(batches.size());
  std::sort(batches.begin(), batches.end());
  out.band_low = std::min(sorted_quantile(batches, 0.025), out.remaining_batches_point);
  out.band_high = std::max(sorted_quantile(batches, 0.975), out.remaining_batches_point);
  return out;
}

ForecastResult predict_stopping_sim(const Session& session, const ForecastOptions& opts) {
  if (is_terminal(session.status().status)) {
    ForecastResult done;
    done.replications = opts.replications;
    return done;
  }
  if (session.band_history().empty())
    throw InvalidArgumentError("forecast needs at least one completed wave");
  const auto& last = session.band_history().back();
  ContinuationStart start;
  start.k = last.interval.k_eff;
  start.s = last.interval.s_eff;
  start.p_hat = last.estimate;
  start.completed_waves = session.completed_waves();
  start.batch_size = session.config().policy.batch_size;
  start.method = session.config().method;
  start.alpha = session.config().alpha;
  start.rule = session.config().rule;
  start.monotone_bands = session.config().monotone_bands;
  start.last_band = last.interval;
  return simulate_continuations(start, opts);
}

double rate_remaining_samples(double width, double n, double target_width) {
  if (!(width > 0.0 && n >= 1.0 && target_width > 0.0))
    throw InvalidArgumentError("rate forecast needs W > 0, n >= 1 and L > 0");
  const double ratio = width / target_width;
  return std::max(0.0, n * (ratio * ratio - 1.0));
}

std::size_t predict_stopping_rate(double width, double n, double target_width,
                                  std::size_t batch_size) {
  if (batch_size < 1) throw InvalidArgumentError("batch size must be at least 1");
  const double extra = rate_remaining_samples(width, n, target_width);
  // Guard against 1200.0000000001 / 100 rounding up to 13.
  const double batches = extra / static_cast<double>(batch_size);
  return static_cast<std::size_t>(std::ceil(batches - 1e-9));
}

ForecastResult predict_stopping_rate(const Session& session, std::optional<double> target_width) {
  ForecastResult out;
  out.method = ForecastMethod::rate;
  if (is_terminal(session.status().status)) return out;
  if (session.band_history().empty())
    throw InvalidArgumentError("forecast needs at least one completed wave");
  const double target = target_width ? *target_width
                                     : session.config().rule.width_limit.value_or(0.0);
  if (!(target > 0.0)) throw InvalidArgumentError("rate forecast needs a target width");
  const auto& last = session.band_history().back();
  const double width = last.interval.width();
  const double n = static_cast<double>(session.reviewed());
  const double batches =
      width <= 0.0 ? 0.0
                   : static_cast<double>(predict_stopping_rate(width, n, target,
                                                               session.config().policy.batch_size));
  out.remaining_batches_point = batches;
  out.band_low = batches;
  out.band_high = batches;
  return out;
}

nlohmann::json to_json(const ForecastResult& r) {
  return nlohmann::json{{"method", to_string(r.method)},
                        {"remaining_batches", r.remaining_batches_point},
                        {"band", {r.band_low, r.band_high}},
                        {"replications", r.replications},
                        {"horizon_hits", r.horizon_hits}};
}

}  // namespace chartwave
