#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace chartwave {

enum class IntervalMethod { lai, bayes, normal };

std::string_view to_string(IntervalMethod method);
IntervalMethod parse_interval_method(std::string_view text);

/// A band for the tracked proportion at one look. k_eff/s_eff are the
/// (possibly fractional) trial and success counts the band was computed from.
struct IntervalEstimate {
  double lower = 0.0;
  double upper = 1.0;
  double point = 0.5;
  IntervalMethod method = IntervalMethod::bayes;
  double alpha = 0.05;
  double k_eff = 0.0;
  double s_eff = 0.0;

  double width() const { return upper - lower; }
  bool operator==(const IntervalEstimate&) const = default;
};

/// Per-look error levels for repeated normal intervals: alpha_i = alpha / 2^(i+1),
/// which sums to alpha over i = 0, 1, 2, ...
struct AlphaSchedule {
  enum class Rule { geometric_halving };

  double alpha = 0.05;
  Rule rule = Rule::geometric_halving;

  double at(std::size_t wave_index) const;
  /// alpha_0 + ... + alpha_i.
  double spent_through(std::size_t wave_index) const;
};

/// log of the binomial probability b(k, p, s), extended to real k and s
/// through log-gamma.
double log_binomial_density(double k, double p, double s);

/// (k + 1) * b(k, p, s), the left-hand side of the confidence-sequence
/// boundary equation.
double lai_boundary(double k, double p, double s);

/// Confidence-sequence band for a binomial proportion: the two roots in p of
/// (k + 1) b(k, p, s) = alpha, one on each side of s / k. Roots are found by
/// bisection of the log equation. s == 0 pins the lower end to 0, s == k pins
/// the upper end to 1, and k == 0 gives [0, 1].
///
/// Throws InvalidArgumentError for s outside [0, k] or alpha outside (0, 1),
/// and NumericError when alpha exceeds the peak of the left-hand side.
IntervalEstimate lai_interval(double k, double s, double alpha);

/// Equal-tailed credible interval of the Beta(1 + s, 1 + k - s) posterior
/// under a uniform prior. point is the posterior mean.
IntervalEstimate bayes_interval(double k, double s, double alpha);

/// Regularised incomplete Beta function I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// Beta(a, b) quantile: x with I_x(a, b) = q to 1e-10. Safeguarded Newton
/// iteration inside a shrinking bisection bracket.
double beta_quantile(double a, double b, double q);

/// Standard normal quantile.
double normal_quantile(double p);

/// Normal-approximation interval for the mean of continuous values at the
/// given look, using the schedule's per-look level split evenly between the
/// two tails. Needs at least two values.
IntervalEstimate normal_interval(std::span<const double> values, std::size_t wave_index,
                                 const AlphaSchedule& schedule);

/// Same construction from summary moments (n observations, empirical mean and
/// unbiased sd).
IntervalEstimate normal_interval_from_moments(double n, double mean, double sd,
                                              std::size_t wave_index,
                                              const AlphaSchedule& schedule);

/// Dispatches a binomial band from (k, s). For the normal method the 0/1
/// moments implied by (k, s) are used.
IntervalEstimate binomial_interval(IntervalMethod method, double k, double s, double alpha,
                                   std::size_t wave_index);

}  // namespace chartwave
