// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "cluster_tails/errors.hpp"
#include "cluster_tails/heavytail.hpp"
#include "cluster_tails/tail_denominator.hpp"

namespace cluster_tails {

/// Sample sorted ascending.
class TailSample {
 public:
  TailSample() = default;
  explicit TailSample(std::vector<double> values) : values_(std::move(values)) {
    std::sort(values_.begin(), values_.end());
  }

  std::span<const double> values() const noexcept { return values_; }
  std::size_t n() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  /// Number of values strictly greater than x.
  std::uint64_t exceedances(double x) const noexcept {
    return static_cast<std::uint64_t>(values_.end() - std::upper_bound(values_.begin(), values_.end(), x));
  }

  /// Lower empirical quantile: the order statistic at floor(q (n - 1)).
  double quantile(double q) const {
    require(!values_.empty(), "quantile of an empty sample");
    require(q >= 0.0 && q <= 1.0, "quantile level must lie in [0, 1]");
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(values_.size() - 1)));
    return values_[idx];
  }

 private:
  std::vector<double> values_;
};

inline constexpr double kZ95 = 1.959963984540054;

struct MeanEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Mean and standard error of proj(v) over a range, accumulated in index order.
template <class Range, class Proj>
MeanEstimate sample_mean(const Range& values, Proj proj) {
  const auto n = static_cast<double>(std::size(values));
  long double sum = 0.0L;
  for (const auto& v : values) sum += proj(v);
  const auto mean = static_cast<double>(sum / n);
  long double ss = 0.0L;
  for (const auto& v : values) {
    const double d = proj(v) - mean;
    ss += static_cast<long double>(d) * d;
  }
  const double var = n > 1.0 ? static_cast<double>(ss / (n - 1.0)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Wilson score interval for `count` successes out of n.
inline Interval wilson_interval(std::uint64_t count, std::uint64_t n, double z = kZ95) noexcept {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(count) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // Clamp so the interval always contains p despite rounding.
  return {std::min(p, std::max(0.0, centre - half)), std::max(p, std::min(1.0, centre + half))};
}

struct SurvivalEstimate {
  double probability = 0.0;
  Interval ci;
  std::uint64_t exceedances = 0;
};

inline SurvivalEstimate empirical_survival(const TailSample& sample, double x) {
  require(sample.n() > 0, "empirical survival of an empty sample");
  const auto count = sample.exceedances(x);
  return {static_cast<double>(count) / static_cast<double>(sample.n()), wilson_interval(count, sample.n()), count};
}

//---------------------------------------------------------------------------//
// Ratio curves
//---------------------------------------------------------------------------//

struct RatioCurve {
  std::vector<double> grid;
  std::vector<std::uint64_t> exceedances;
  std::vector<double> empirical;
  std::vector<double> denominator;
  std::vector<double> ratio;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  Provenance provenance;

  std::size_t size() const noexcept { return grid.size(); }

  double max_abs_deviation() const noexcept {
    double d = 0.0;
    for (double r : ratio) d = std::max(d, std::fabs(r - 1.0));
    return d;
  }
};

inline const std::vector<double>& default_quantile_levels() {
  static const std::vector<double> levels{0.99, 0.995, 0.999, 0.9995, 0.9999};
  return levels;
}

inline std::vector<double> quantile_grid(const TailSample& sample, std::span<const double> levels) {
  std::vector<double> grid;
  grid.reserve(levels.size());
  for (double q : levels) grid.push_back(sample.quantile(q));
  return grid;
}

struct RatioOptions {
  std::uint64_t min_exceedances = 50;
};

/// ratio[i] = P_hat(sample > grid[i]) / denominator[i]; the band propagates
/// only the numerator's Wilson interval.
inline RatioCurve ratio_curve(const TailSample& sample, std::span<const double> grid,
                              std::span<const double> denominator, const RatioOptions& options = {}) {
  require(grid.size() == denominator.size(), "grid and denominator sizes differ");
  require(!grid.empty(), "empty grid", "grid");
  require(std::is_sorted(grid.begin(), grid.end()), "grid must be ascending", "grid");
  RatioCurve c;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    require(denominator[i] > 0.0, "denominator must be positive", "denominator");
    const auto est = empirical_survival(sample, grid[i]);
    c.grid.push_back(grid[i]);
    c.exceedances.push_back(est.exceedances);
    c.empirical.push_back(est.probability);
    c.denominator.push_back(denominator[i]);
    c.ratio.push_back(est.probability / denominator[i]);
    c.ci_low.push_back(est.ci.low / denominator[i]);
    c.ci_high.push_back(est.ci.high / denominator[i]);
  }
  if (c.exceedances.back() < options.min_exceedances) {
    fail(ErrorKind::InsufficientExceedances,
         "largest grid point has " + std::to_string(c.exceedances.back()) + " exceedances, need " +
             std::to_string(options.min_exceedances));
  }
  return c;
}

/// Ratio of the sample's empirical tail to the asymptotic denominator of
/// `target` under `model`.
inline RatioCurve ratio_curve(const TailSample& sample, const JointMarkModel& model, Target target,
                              std::span<const double> grid, const DenominatorOptions& denominator_options = {},
                              const RatioOptions& options = {}) {
  auto den = theoretical_denominator(model, target, grid, denominator_options);
  auto curve = ratio_curve(sample, grid, den.values, options);
  curve.provenance = den.provenance;
  return curve;
}

inline void write_csv(std::ostream& os, const RatioCurve& c) {
  os << "x,exceedances,empirical,denominator,ratio,ci_low,ci_high\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    os << format_double(c.grid[i]) << ',' << c.exceedances[i] << ',' << format_double(c.empirical[i]) << ','
       << format_double(c.denominator[i]) << ',' << format_double(c.ratio[i]) << ',' << format_double(c.ci_low[i])
       << ',' << format_double(c.ci_high[i]) << '\n';
  }
}

//---------------------------------------------------------------------------//
// Hill estimator
//---------------------------------------------------------------------------//

struct HillEstimate {
  std::uint64_t k = 0;
  double alpha_hat = 0.0;
  double se = 0.0;
};

inline std::uint64_t default_hill_k(std::uint64_t n) noexcept {
  return static_cast<std::uint64_t>(std::floor(std::sqrt(static_cast<double>(n))));
}

/// alpha_hat = 1 / mean_{i=1..k} log(X_(n-i+1) / X_(n-k)).
inline HillEstimate hill_estimator(const TailSample& sample, std::uint64_t k) {
  const auto v = sample.values();
  const std::uint64_t n = v.size();
  require(k >= 2 && k < n, "Hill estimator needs 2 <= k < n", "k");
  const double ref = v[n - k - 1];
  require(ref > 0.0, "Hill estimator needs positive top order statistics", "k");
  double sum = 0.0;
  for (std::uint64_t i = n - k; i < n; ++i) sum += std::log(v[i] / ref);
  if (!(sum > 0.0)) fail(ErrorKind::DegenerateTail, "top-k order statistics are all equal");
  const double alpha = static_cast<double>(k) / sum;
  return {k, alpha, alpha / std::sqrt(static_cast<double>(k))};
}

//---------------------------------------------------------------------------//
// Laplace-Stieltjes derivatives and the Tauberian slope
//---------------------------------------------------------------------------//

/// Sample mean of (-x)^order e^{-s x}, with its standard error.
inline MeanEstimate laplace_derivative_with_se(const TailSample& sample, double s, unsigned order) {
  require(sample.n() > 0, "Laplace transform of an empty sample");
  require(s >= 0.0, "Laplace argument must be >= 0", "s");
  const double sign = (order % 2 == 1) ? -1.0 : 1.0;
  const double ord = static_cast<double>(order);
  auto term = [&](double x) {
    if (order == 0) return std::exp(-s * x);
    if (x <= 0.0) return 0.0;
    return sign * std::exp(ord * std::log(x) - s * x);
  };
  return sample_mean(sample.values(), term);
}

/// phi^{(order)}(s) = E[(-X)^order e^{-sX}] estimated by the sample mean.
inline double laplace_derivative_mc(const TailSample& sample, double s, unsigned order) {
  return laplace_derivative_with_se(sample, s, order).mean;
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  require(lo > 0.0 && hi > lo && count >= 2, "log grid needs 0 < lo < hi and count >= 2");
  std::vector<double> g(count);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  g.front() = lo;
  g.back() = hi;
  return g;
}

struct TauberianPoint {
  double s = 0.0;
  double derivative = 0.0;
  double relative_se = 0.0;
};

struct TauberianFit {
  unsigned order = 0;
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<TauberianPoint> points;
};

inline constexpr double kMaxTauberianRelativeSe = 0.25;

/// Least-squares slope of log|phi^{(ceil alpha)}(s)| against log s. For a
/// regularly varying tail of noninteger index alpha the slope tends to
/// alpha - ceil(alpha) as s -> 0.
inline TauberianFit tauberian_fit(const TailSample& sample, double alpha, std::span<const double> s_grid) {
  require(alpha > 0.0 && alpha != std::floor(alpha), "Tauberian slope needs a noninteger alpha", "alpha");
  require(s_grid.size() >= 2, "Tauberian slope needs at least two grid points", "s_grid");
  TauberianFit fit;
  fit.order = static_cast<unsigned>(std::ceil(alpha));
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (double s : s_grid) {
    require(s > 0.0, "Tauberian grid must be positive", "s_grid");
    const auto est = laplace_derivative_with_se(sample, s, fit.order);
    const double rel = est.mean != 0.0 ? est.se / std::fabs(est.mean) : INFINITY;
    fit.points.push_back({s, est.mean, rel});
    if (rel > kMaxTauberianRelativeSe) {
      fail(ErrorKind::UnstableEstimate, "relative standard error above 25% at s = " + format_double(s));
    }
    const double lx = std::log(s);
    const double ly = std::log(std::fabs(est.mean));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double m = static_cast<double>(s_grid.size());
  fit.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / m;
  return fit;
}

inline double tauberian_slope(const TailSample& sample, double alpha, std::span<const double> s_grid) {
  return tauberian_fit(sample, alpha, s_grid).slope;
}

}  // namespace cluster_tails
