// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cluster_tails/clusters.hpp"
#include "cluster_tails/errors.hpp"
#include "cluster_tails/estimate.hpp"
#include "cluster_tails/heavytail.hpp"
#include "cluster_tails/parallel.hpp"
#include "cluster_tails/rng.hpp"

namespace cluster_tails {

struct WindowConfig {
  JointMarkModel model;
  ClusterParams cluster;
  double nu = 1.0;       // immigration rate
  double horizon = 1.0;  // T

  void validate() const {
    require(nu > 0.0 && std::isfinite(nu), "immigration rate must be positive", "nu");
    require(horizon > 0.0 && std::isfinite(horizon), "horizon must be positive", "horizon");
    require(std::holds_alternative<HawkesParams>(cluster) == model.is_hawkes(),
            "cluster parameters do not match the model family", "cluster");
    if (const auto* r = std::get_if<RenewalParams>(&cluster)) {
      r->validate();
    } else {
      std::get<HawkesParams>(cluster).validate();
    }
  }

  /// Expected event count over [0, T] ignoring boundary truncation.
  double expected_events() const { return cluster_tails::expected_events(model, nu, horizon); }
};

/// Summary of one realization of the process restricted to clusters started
/// in [0, T].
struct WindowStats {
  std::uint64_t n_events = 0;    // N_T
  std::uint64_t j_leftover = 0;  // J_T
  double sum_in_window = 0.0;    // S_T
  double max_in_window = 0.0;
  double leftover_sum = 0.0;     // eps_T
  std::uint64_t n_clusters = 0;  // C_T

  friend bool operator==(const WindowStats&, const WindowStats&) = default;
};

/// Per-cluster record, collected only on request (for pathwise checks).
struct StartedCluster {
  double start = 0.0;
  double max = 0.0;
  double sum = 0.0;
  std::uint64_t size = 0;
};

/// One window: C_T ~ Poisson(nu T) immigrants placed uniformly on [0, T];
/// an event belongs to the window iff start + offset <= T.
inline WindowStats simulate_window(const WindowConfig& config, RngStream& rng,
                                   std::vector<StartedCluster>* trace = nullptr) {
  thread_local Cluster buffer;
  WindowStats s;
  const double T = config.horizon;
  s.n_clusters = rng.poisson(config.nu * T);
  if (trace) trace->clear();
  for (std::uint64_t c = 0; c < s.n_clusters; ++c) {
    const double start = T * rng.uniform();
    sample_cluster(config.model, config.cluster, rng, buffer);
    ++s.n_events;
    s.sum_in_window += buffer.immigrant_mark;
    s.max_in_window = std::max(s.max_in_window, buffer.immigrant_mark);
    for (const auto& e : buffer.events) {
      if (start + e.time_offset <= T) {
        ++s.n_events;
        s.sum_in_window += e.mark;
        s.max_in_window = std::max(s.max_in_window, e.mark);
      } else {
        ++s.j_leftover;
        s.leftover_sum += e.mark;
      }
    }
    if (trace) trace->push_back({start, functional_max(buffer), functional_sum(buffer), buffer.size()});
  }
  return s;
}

/// n i.i.d. windows; window i draws from stream (seed, Windows, i).
inline std::vector<WindowStats> batch_windows(const WindowConfig& config, std::uint64_t n, std::uint64_t seed,
                                              unsigned workers = 1, StreamPurpose purpose = StreamPurpose::Windows) {
  require(n >= 1, "batch needs n >= 1", "replications");
  config.validate();
  std::vector<WindowStats> out(n);
  parallel_for(n, workers, [&](std::uint64_t i) {
    auto rng = RngStream::substream(seed, purpose, i);
    try {
      out[i] = simulate_window(config, rng);
    } catch (ClusterOverflow& e) {
      e.set_replication(static_cast<std::int64_t>(i));
      throw;
    }
  });
  return out;
}

/// Pilot Monte Carlo estimate of E[S_T] from windows on the Pilot streams.
inline MeanEstimate estimate_mean_sum(const WindowConfig& config, std::uint64_t pilot_n, std::uint64_t seed,
                                      unsigned workers = 1) {
  require(pilot_n >= 1000, "pilot needs at least 1000 windows", "pilot");
  const auto windows = batch_windows(config, pilot_n, seed, workers, StreamPurpose::Pilot);
  return sample_mean(windows, [](const WindowStats& w) { return w.sum_in_window; });
}

}  // namespace cluster_tails
