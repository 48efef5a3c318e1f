// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "cluster_tails/errors.hpp"
#include "cluster_tails/estimate.hpp"
#include "cluster_tails/process.hpp"
#include "cluster_tails/rng.hpp"
#include "cluster_tails/tail_denominator.hpp"

namespace cluster_tails {

struct SweepConfig {
  WindowConfig window;  // horizon is overridden per sweep point
  std::vector<double> horizons;
  double gamma = 0.5;
  std::uint64_t replications = 1'000'000;
  std::size_t x_levels = 12;
  std::uint64_t pilot = 100'000;
  std::uint64_t min_exceedances = 50;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  DenominatorOptions denominator;

  void validate() const {
    window.validate();
    require(!horizons.empty(), "sweep needs at least one horizon", "horizons");
    require(std::is_sorted(horizons.begin(), horizons.end()) &&
                std::adjacent_find(horizons.begin(), horizons.end()) == horizons.end(),
            "horizons must be strictly ascending", "horizons");
    for (double t : horizons) require(t > 0.0 && std::isfinite(t), "horizons must be positive", "horizons");
    require(gamma > 0.0 && std::isfinite(gamma), "gamma must be positive", "gamma");
    require(replications >= 10'000, "sweeps need at least 10^4 replications per horizon", "replications");
    require(x_levels >= 1, "sweeps need at least one grid point", "x_levels");
    require(min_exceedances >= 1 && min_exceedances < replications, "min_exceedances out of range",
            "min_exceedances");
  }

  WindowConfig window_at(double horizon) const {
    WindowConfig w = window;
    w.horizon = horizon;
    return w;
  }

  /// Seed of the horizon at `index`; sweeps over the same horizons with the
  /// same seed see the same windows.
  std::uint64_t horizon_seed(std::size_t index) const { return derive_seed(seed, index); }
};

struct SweepRow {
  double horizon = 0.0;
  double x = 0.0;
  std::uint64_t exceedances = 0;
  double empirical = 0.0;
  double denominator = 0.0;
  double ratio = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double sup_abs_dev = 0.0;  // per horizon, repeated on each row
  bool certified = false;    // exceedances >= min_exceedances
};

struct HorizonSummary {
  double horizon = 0.0;
  double sup_abs_dev = 0.0;
  double sup_se = 0.0;       // standard error of the ratio where the sup is attained
  double x_low = 0.0;        // gamma * nu * T
  double x_certified = 0.0;  // largest certified grid point
  std::size_t certified_points = 0;
  double expected_events = 0.0;
  double mean_sum = 0.0;  // pilot estimate of E[S_T] (sum sweeps)
  double mean_sum_se = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<HorizonSummary> horizons;
  Provenance provenance;
};

namespace detail {

inline std::vector<double> sweep_grid(const TailSample& deviations, double x_low, std::size_t levels,
                                      std::uint64_t min_exceedances) {
  const double n = static_cast<double>(deviations.n());
  const double x_high = deviations.quantile(1.0 - static_cast<double>(min_exceedances) / n);
  if (!(x_high > x_low) || levels == 1) return {x_low};
  return log_spaced(x_low, x_high, levels);
}

/// Fills rows for one horizon. `den` is the denominator per grid point;
/// `shift_se` widens the band for an estimated centring constant.
inline HorizonSummary finish_horizon(const TailSample& deviations, double horizon, std::span<const double> grid,
                                     std::span<const double> den, double shift_se, std::uint64_t min_exceedances,
                                     std::vector<SweepRow>& rows) {
  HorizonSummary h;
  h.horizon = horizon;
  h.x_low = grid.front();
  const std::size_t first = rows.size();
  const auto n = deviations.n();
  double sup = 0.0;
  double sup_se = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    SweepRow r;
    r.horizon = horizon;
    r.x = grid[i];
    r.exceedances = deviations.exceedances(grid[i]);
    r.empirical = static_cast<double>(r.exceedances) / static_cast<double>(n);
    r.denominator = den[i];
    r.ratio = r.empirical / r.denominator;
    const auto lo = wilson_interval(deviations.exceedances(grid[i] + kZ95 * shift_se), n);
    const auto hi = wilson_interval(deviations.exceedances(grid[i] - kZ95 * shift_se), n);
    r.ci_low = std::min(lo.low / r.denominator, r.ratio);
    r.ci_high = std::max(hi.high / r.denominator, r.ratio);
    r.certified = r.exceedances >= min_exceedances;
    if (r.certified) {
      ++h.certified_points;
      h.x_certified = r.x;
      const double dev = std::fabs(r.ratio - 1.0);
      if (dev >= sup) {
        sup = dev;
        const double p = r.empirical;
        sup_se = r.ratio * std::sqrt((1.0 - p) / (static_cast<double>(n) * p));
      }
    }
    rows.push_back(r);
  }
  h.sup_abs_dev = sup;
  h.sup_se = sup_se;
  for (std::size_t i = first; i < rows.size(); ++i) rows[i].sup_abs_dev = sup;
  return h;
}

}  // namespace detail

/// Ratio P(max in-window mark > x) / (E[N_T] P(X > x)) over x in
/// [gamma nu T, x_high], x_high the empirical 1 - min_exceedances/n quantile.
inline SweepResult ldp_max_sweep(const SweepConfig& config) {
  config.validate();
  SweepResult out;
  for (std::size_t h = 0; h < config.horizons.size(); ++h) {
    const double T = config.horizons[h];
    const auto window = config.window_at(T);
    const auto windows = batch_windows(window, config.replications, config.horizon_seed(h), config.workers);
    std::vector<double> maxima(windows.size());
    std::transform(windows.begin(), windows.end(), maxima.begin(),
                   [](const WindowStats& w) { return w.max_in_window; });
    const TailSample sample(std::move(maxima));
    const double x_low = config.gamma * window.nu * T;
    const auto grid = detail::sweep_grid(sample, x_low, config.x_levels, config.min_exceedances);
    const double en = window.expected_events();
    std::vector<double> den(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) den[i] = en * survival(window.model.mark_law(), grid[i]);
    auto summary = detail::finish_horizon(sample, T, grid, den, 0.0, config.min_exceedances, out.rows);
    summary.expected_events = en;
    out.horizons.push_back(summary);
  }
  return out;
}

/// Ratio P(S_T - mu > x) / (nu T * cluster-sum denominator). For renewal
/// models that is nu T (P(X + E[X]K > x) + E[K] P(X > x)); for Hawkes models
/// E[N_T] P(X + E[X]/(1 - E[kappa]) kappa > x). mu is a pilot estimate.
inline SweepResult ldp_sum_sweep(const SweepConfig& config) {
  config.validate();
  SweepResult out;
  const Target target = config.window.model.is_hawkes() ? Target::HawkesSum : Target::RenewalSum;
  for (std::size_t h = 0; h < config.horizons.size(); ++h) {
    const double T = config.horizons[h];
    const auto window = config.window_at(T);
    const std::uint64_t seed = config.horizon_seed(h);
    const auto mu = estimate_mean_sum(window, config.pilot, seed, config.workers);
    const auto windows = batch_windows(window, config.replications, seed, config.workers);
    std::vector<double> deviations(windows.size());
    std::transform(windows.begin(), windows.end(), deviations.begin(),
                   [m = mu.mean](const WindowStats& w) { return w.sum_in_window - m; });
    const TailSample sample(std::move(deviations));
    const double x_low = config.gamma * window.nu * T;
    const auto grid = detail::sweep_grid(sample, x_low, config.x_levels, config.min_exceedances);
    auto den = theoretical_denominator(window.model, target, grid, config.denominator);
    for (double& d : den.values) d *= window.nu * T;
    out.provenance = den.provenance;
    auto summary = detail::finish_horizon(sample, T, grid, den.values, mu.se, config.min_exceedances, out.rows);
    summary.expected_events = window.expected_events();
    summary.mean_sum = mu.mean;
    summary.mean_sum_se = mu.se;
    out.horizons.push_back(summary);
  }
  return out;
}

struct LeftoverRow {
  double horizon = 0.0;
  double j_over_t = 0.0;  // E[J_T] / T
  double j_over_t_se = 0.0;
  double eps_over_sqrt_t = 0.0;  // E[eps_T] / sqrt(T)
  double eps_over_sqrt_t_se = 0.0;
  double mean_events = 0.0;  // empirical E[N_T]
  double mean_events_se = 0.0;
  double expected_events = 0.0;  // boundary-free formula
};

/// Empirical E[J_T]/T and E[eps_T]/sqrt(T) per horizon.
inline std::vector<LeftoverRow> leftover_scaling(const SweepConfig& config) {
  config.validate();
  std::vector<LeftoverRow> rows;
  for (std::size_t h = 0; h < config.horizons.size(); ++h) {
    const double T = config.horizons[h];
    const auto window = config.window_at(T);
    const auto windows = batch_windows(window, config.replications, config.horizon_seed(h), config.workers);
    const auto j = sample_mean(windows, [](const WindowStats& w) { return static_cast<double>(w.j_leftover); });
    const auto eps = sample_mean(windows, [](const WindowStats& w) { return w.leftover_sum; });
    const auto events = sample_mean(windows, [](const WindowStats& w) { return static_cast<double>(w.n_events); });
    const double rt = std::sqrt(T);
    rows.push_back({T, j.mean / T, j.se / T, eps.mean / rt, eps.se / rt, events.mean, events.se,
                    window.expected_events()});
  }
  return rows;
}

inline void write_csv(std::ostream& os, const SweepResult& r) {
  os << "horizon,x,exceedances,empirical,denominator,ratio,ci_low,ci_high,sup_abs_dev\n";
  for (const auto& row : r.rows) {
    os << format_double(row.horizon) << ',' << format_double(row.x) << ',' << row.exceedances << ','
       << format_double(row.empirical) << ',' << format_double(row.denominator) << ',' << format_double(row.ratio)
       << ',' << format_double(row.ci_low) << ',' << format_double(row.ci_high) << ','
       << format_double(row.sup_abs_dev) << '\n';
  }
}

inline void write_csv(std::ostream& os, const std::vector<LeftoverRow>& rows) {
  os << "horizon,j_over_t,j_over_t_se,eps_over_sqrt_t,eps_over_sqrt_t_se,mean_events,mean_events_se,"
        "expected_events\n";
  for (const auto& r : rows) {
    os << format_double(r.horizon) << ',' << format_double(r.j_over_t) << ',' << format_double(r.j_over_t_se) << ','
       << format_double(r.eps_over_sqrt_t) << ',' << format_double(r.eps_over_sqrt_t_se) << ','
       << format_double(r.mean_events) << ',' << format_double(r.mean_events_se) << ','
       << format_double(r.expected_events) << '\n';
  }
}

/// Nonincreasing check on per-horizon sup deviations, tolerating at most one
/// increase that stays within two standard errors.
inline bool sup_nonincreasing(const std::vector<HorizonSummary>& hs) {
  int inversions = 0;
  for (std::size_t i = 1; i < hs.size(); ++i) {
    const double rise = hs[i].sup_abs_dev - hs[i - 1].sup_abs_dev;
    if (rise <= 0.0) continue;
    const double se = std::hypot(hs[i].sup_se, hs[i - 1].sup_se);
    if (rise > 2.0 * se) return false;
    if (++inversions > 1) return false;
  }
  return true;
}

}  // namespace cluster_tails
