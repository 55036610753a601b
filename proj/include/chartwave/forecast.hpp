#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

#include "chartwave/engine.hpp"

namespace chartwave {

enum class ForecastMethod { simulate, rate };

std::string_view to_string(ForecastMethod method);
ForecastMethod parse_forecast_method(std::string_view text);

struct ForecastResult {
  double remaining_batches_point = 0.0;
  double band_low = 0.0;
  double band_high = 0.0;
  std::size_t replications = 0;
  ForecastMethod method = ForecastMethod::simulate;
  /// Replications that reached the horizon without stopping.
  std::size_t horizon_hits = 0;
};

struct ForecastOptions {
  std::size_t replications = 200;
  std::uint64_t seed = 1;
  std::size_t horizon = 500;
  unsigned threads = 1;
};

/// Where a simulated continuation starts from.
struct ContinuationStart {
  double k = 0.0;
  double s = 0.0;
  double p_hat = 0.0;
  std::size_t completed_waves = 0;
  std::size_t batch_size = 100;
  IntervalMethod method = IntervalMethod::bayes;
  double alpha = 0.05;
  StoppingRule rule;
  bool monotone_bands = false;
  std::optional<IntervalEstimate> last_band;
};

/// Extends the current tallies with unit-weight Bernoulli(p_hat) batches and
/// counts batches until the rule fires, R times. Point is the mean, band the
/// empirical 2.5% / 97.5% quantiles.
ForecastResult simulate_continuations(const ContinuationStart& start, const ForecastOptions& opts);

/// Simulation forecast from a live session, continuing from its effective
/// counts and raked point estimate. A stopped session forecasts zero.
ForecastResult predict_stopping_sim(const Session& session, const ForecastOptions& opts);

/// Extra samples n' with W sqrt(n / (n + n')) = L, floored at zero.
double rate_remaining_samples(double width, double n, double target_width);

/// ceil(n' / B) batches under the n^(-1/2) width rate.
std::size_t predict_stopping_rate(double width, double n, double target_width,
                                  std::size_t batch_size);

/// Rate forecast from a live session's latest band. The target width is the
/// rule's width limit unless one is supplied.
ForecastResult predict_stopping_rate(const Session& session,
                                     std::optional<double> target_width = std::nullopt);

nlohmann::json to_json(const ForecastResult& result);

}  // namespace chartwave
