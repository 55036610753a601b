#include "chartwave/intervals.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "chartwave/errors.hpp"

namespace chartwave {

namespace {

constexpr int kBisectionCap = 200;
constexpr double kBracketTolerance = 1e-12;

void check_counts(double k, double s, double alpha) {
  if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidArgumentError("k must be finite and >= 0");
  if (!(s >= 0.0 && s <= k)) throw InvalidArgumentError("s must lie in [0, k]");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgumentError("alpha must lie in (0, 1)");
}

// Continued fraction for the incomplete Beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxTerms = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxTerms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

double log_beta_function(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double beta_log_density(double a, double b, double x) {
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_function(a, b);
}

}  // namespace

std::string_view to_string(IntervalMethod method) {
  switch (method) {
    case IntervalMethod::lai:
      return "lai";
    case IntervalMethod::normal:
      return "normal";
    case IntervalMethod::bayes:
      break;
  }
  return "bayes";
}

IntervalMethod parse_interval_method(std::string_view text) {
  if (text == "lai") return IntervalMethod::lai;
  if (text == "bayes") return IntervalMethod::bayes;
  if (text == "normal") return IntervalMethod::normal;
  throw InvalidArgumentError("unknown interval method '" + std::string(text) + "'");
}

double AlphaSchedule::at(std::size_t wave_index) const {
  return std::ldexp(alpha, -static_cast<int>(std::min<std::size_t>(wave_index, 1020)) - 1);
}

double AlphaSchedule::spent_through(std::size_t wave_index) const {
  double total = 0.0;
  for (std::size_t i = 0; i <= wave_index; ++i) total += at(i);
  return total;
}

double log_binomial_density(double k, double p, double s) {
  const double log_choose = std::lgamma(k + 1.0) - std::lgamma(s + 1.0) - std::lgamma(k - s + 1.0);
  double terms = 0.0;
  if (s > 0.0) terms += s * std::log(p);
  if (k - s > 0.0) terms += (k - s) * std::log1p(-p);
  return log_choose + terms;
}

double lai_boundary(double k, double p, double s) {
  return (k + 1.0) * std::exp(log_binomial_density(k, p, s));
}

IntervalEstimate lai_interval(double k, double s, double alpha) {
  check_counts(k, s, alpha);
  IntervalEstimate est{0.0, 1.0, 0.5, IntervalMethod::lai, alpha, k, s};
  if (k == 0.0) return est;
  const double mle = s / k;
  est.point = mle;
  const double log_alpha = std::log(alpha);
  const double log_k1 = std::log(k + 1.0);
  auto excess = [&](double p) { return log_k1 + log_binomial_density(k, p, s) - log_alpha; };
  if (excess(mle) < 0.0)
    throw NumericError("alpha exceeds the peak of (k+1) b(k, p, s); boundary equation has no root");

  // excess is increasing on [0, mle] and decreasing on [mle, 1].
  auto bisect = [&](double lo, double hi, bool rising) {
    for (int it = 0; it < kBisectionCap && hi - lo > kBracketTolerance; ++it) {
      const double mid = 0.5 * (lo + hi);
      const bool above = excess(mid) >= 0.0;
      if (above == rising)
        hi = mid;
      else
        lo = mid;
    }
    // One secant step across the final bracket; near p = 0 or 1 the density
    // is steep enough that the bracket midpoint alone leaves a visible residual.
    const double flo = excess(lo), fhi = excess(hi);
    if (std::isfinite(flo) && std::isfinite(fhi) && flo != fhi) {
      const double p = lo - flo * (hi - lo) / (fhi - flo);
      if (p >= lo && p <= hi) return p;
    }
    return 0.5 * (lo + hi);
  };
  est.lower = s > 0.0 ? bisect(0.0, mle, true) : 0.0;
  est.upper = s < k ? bisect(mle, 1.0, false) : 1.0;
  est.lower = std::min(est.lower, mle);
  est.upper = std::max(est.upper, mle);
  return est;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw InvalidArgumentError("beta shape parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgumentError("x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta_function(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_quantile(double a, double b, double q) {
  if (!(a > 0.0 && b > 0.0)) throw InvalidArgumentError("beta shape parameters must be positive");
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgumentError("quantile level must lie in (0, 1)");
  constexpr int kMaxIterations = 300;
  constexpr double kCdfTolerance = 1e-12;
  double lo = 0.0, hi = 1.0;
  double x = a / (a + b);
  for (int it = 0; it < kMaxIterations; ++it) {
    const double f = regularized_incomplete_beta(a, b, x) - q;
    if (std::abs(f) <= kCdfTolerance) return x;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(hi, 1e-300)) return x;
    double next = x - f / std::exp(beta_log_density(a, b, x));
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  throw NumericError("beta quantile did not converge");
}

IntervalEstimate bayes_interval(double k, double s, double alpha) {
  check_counts(k, s, alpha);
  const double a = 1.0 + s, b = 1.0 + k - s;
  IntervalEstimate est;
  est.method = IntervalMethod::bayes;
  est.alpha = alpha;
  est.k_eff = k;
  est.s_eff = s;
  est.lower = beta_quantile(a, b, alpha / 2.0);
  est.upper = beta_quantile(a, b, 1.0 - alpha / 2.0);
  est.point = a / (a + b);
  return est;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgumentError("normal quantile level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

IntervalEstimate normal_interval_from_moments(double n, double mean, double sd,
                                              std::size_t wave_index,
                                              const AlphaSchedule& schedule) {
  if (!(n >= 2.0)) throw InvalidArgumentError("normal interval needs at least two observations");
  if (!(schedule.alpha > 0.0 && schedule.alpha < 1.0))
    throw InvalidArgumentError("alpha must lie in (0, 1)");
  const double level = schedule.at(wave_index);
  const double half = -normal_quantile(level / 2.0) * sd / std::sqrt(n);
  IntervalEstimate est;
  est.method = IntervalMethod::normal;
  est.alpha = level;
  est.k_eff = n;
  est.s_eff = 0.0;
  est.point = mean;
  est.lower = mean - half;
  est.upper = mean + half;
  return est;
}

IntervalEstimate normal_interval(std::span<const double> values, std::size_t wave_index,
                                 const AlphaSchedule& schedule) {
  if (values.size() < 2) throw InvalidArgumentError("normal interval needs at least two values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return normal_interval_from_moments(n, mean, std::sqrt(ss / (n - 1.0)), wave_index, schedule);
}

IntervalEstimate binomial_interval(IntervalMethod method, double k, double s, double alpha,
                                   std::size_t wave_index) {
  switch (method) {
    case IntervalMethod::lai:
      return lai_interval(k, s, alpha);
    case IntervalMethod::bayes:
      return bayes_interval(k, s, alpha);
    case IntervalMethod::normal:
      break;
  }
  check_counts(k, s, alpha);
  IntervalEstimate est{0.0, 1.0, k > 0.0 ? s / k : 0.5, IntervalMethod::normal, alpha, k, s};
  if (k < 2.0) return est;
  const double p = s / k;
  const double sd = std::sqrt(std::max(0.0, p * (1.0 - p) * k / (k - 1.0)));
  est = normal_interval_from_moments(k, p, sd, wave_index, AlphaSchedule{alpha});
  est.s_eff = s;
  est.lower = std::clamp(est.lower, 0.0, 1.0);
  est.upper = std::clamp(est.upper, 0.0, 1.0);
  return est;
}

}  // namespace chartwave
