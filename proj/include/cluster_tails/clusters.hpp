// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "cluster_tails/errors.hpp"
#include "cluster_tails/heavytail.hpp"
#include "cluster_tails/parallel.hpp"
#include "cluster_tails/rng.hpp"

namespace cluster_tails {

/// Anything that can produce the renewal pair (X, K) and offspring marks.
template <class M>
concept RenewalMarkSource = requires(const M& m, RngStream& rng) {
  { m.sample_renewal_pair(rng) } -> std::same_as<RenewalPair>;
  { m.sample_offspring_mark(rng) } -> std::convertible_to<double>;
};

/// Anything that can produce the Hawkes pair (X, kappa).
template <class M>
concept HawkesMarkSource = requires(const M& m, RngStream& rng) {
  { m.sample_hawkes_pair(rng) } -> std::same_as<HawkesPair>;
};

enum class ClusterKind { Renewal, Hawkes };

struct OffspringEvent {
  double time_offset = 0.0;
  double mark = 0.0;
  std::uint32_t generation = 1;
  std::optional<std::uint32_t> parent;  // index into Cluster::events; none for children of the immigrant
  double intensity = 0.0;               // kappa of the event (Hawkes only)
};

struct Cluster {
  double immigrant_mark = 0.0;
  double immigrant_intensity = 0.0;
  std::vector<OffspringEvent> events;
  ClusterKind kind = ClusterKind::Renewal;

  std::uint64_t size() const noexcept { return 1 + events.size(); }
};

struct RenewalParams {
  LightLaw waiting = LightLaw::exponential(1.0);

  void validate(const std::string& field = "cluster.waiting") const { waiting.validate(field); }
};

struct HawkesParams {
  double decay_rate = 1.0;
  std::uint64_t max_cluster_events = 1'000'000;

  void validate(const std::string& field = "cluster") const {
    require(decay_rate > 0.0 && std::isfinite(decay_rate), "decay rate must be positive", field + ".decay_rate");
    require(max_cluster_events > 0, "event guard must be positive", field + ".max_cluster_events");
  }
};

using ClusterParams = std::variant<RenewalParams, HawkesParams>;

namespace detail {
template <class M>
void check_family(const M& model, ModelFamily wanted) {
  if constexpr (requires { model.family(); }) {
    require(model.family() == wanted, wanted == ModelFamily::Renewal ? "model is not a renewal regime"
                                                                     : "model is not a Hawkes regime",
            "model.regime");
  }
}
}  // namespace detail

/// Draws one renewal cluster into `out`, reusing its storage.
template <RenewalMarkSource Model>
void sample_renewal_cluster(const Model& model, const RenewalParams& params, RngStream& rng, Cluster& out) {
  detail::check_family(model, ModelFamily::Renewal);
  const auto [x, k] = model.sample_renewal_pair(rng);
  out.kind = ClusterKind::Renewal;
  out.immigrant_mark = x;
  out.immigrant_intensity = 0.0;
  out.events.clear();
  out.events.reserve(k);
  double t = 0.0;
  for (std::uint64_t j = 0; j < k; ++j) {
    t += params.waiting.sample(rng);
    out.events.push_back({t, model.sample_offspring_mark(rng), 1, std::nullopt, 0.0});
  }
}

template <RenewalMarkSource Model>
Cluster sample_renewal_cluster(const Model& model, const RenewalParams& params, RngStream& rng) {
  Cluster c;
  sample_renewal_cluster(model, params, rng, c);
  return c;
}

/// Draws one Hawkes cluster breadth-first into `out`. Every event, offspring
/// included, draws a fresh (mark, kappa) pair and Poisson(kappa) children
/// displaced by Exponential(decay_rate) after their parent.
template <HawkesMarkSource Model>
void sample_hawkes_cluster(const Model& model, const HawkesParams& params, RngStream& rng, Cluster& out) {
  detail::check_family(model, ModelFamily::Hawkes);
  const auto root = model.sample_hawkes_pair(rng);
  out.kind = ClusterKind::Hawkes;
  out.immigrant_mark = root.mark;
  out.immigrant_intensity = root.kappa;
  out.events.clear();

  auto spawn = [&](double parent_time, std::uint32_t parent_generation, std::optional<std::uint32_t> parent,
                   double kappa) {
    const std::uint64_t children = rng.poisson(kappa);
    for (std::uint64_t c = 0; c < children; ++c) {
      if (out.events.size() >= params.max_cluster_events) {
        throw ClusterOverflow(out.events.size() + (children - c), params.max_cluster_events);
      }
      const auto pair = model.sample_hawkes_pair(rng);
      const double t = parent_time + rng.exponential(params.decay_rate);
      out.events.push_back({t, pair.mark, parent_generation + 1, parent, pair.kappa});
    }
  };

  spawn(0.0, 0, std::nullopt, root.kappa);
  for (std::size_t i = 0; i < out.events.size(); ++i) {
    const OffspringEvent e = out.events[i];
    spawn(e.time_offset, e.generation, static_cast<std::uint32_t>(i), e.intensity);
  }
}

template <HawkesMarkSource Model>
Cluster sample_hawkes_cluster(const Model& model, const HawkesParams& params, RngStream& rng) {
  Cluster c;
  sample_hawkes_cluster(model, params, rng, c);
  return c;
}

/// Dispatches on the params alternative.
template <class Model>
void sample_cluster(const Model& model, const ClusterParams& params, RngStream& rng, Cluster& out) {
  if (const auto* r = std::get_if<RenewalParams>(&params)) {
    if constexpr (RenewalMarkSource<Model>) {
      sample_renewal_cluster(model, *r, rng, out);
      return;
    }
  } else {
    if constexpr (HawkesMarkSource<Model>) {
      sample_hawkes_cluster(model, std::get<HawkesParams>(params), rng, out);
      return;
    }
  }
  fail(ErrorKind::InvalidArgument, "cluster parameters do not match the model family", "cluster");
}

/// H: maximum over the immigrant mark and all event marks.
inline double functional_max(const Cluster& cluster) noexcept {
  double m = cluster.immigrant_mark;
  for (const auto& e : cluster.events) m = std::max(m, e.mark);
  return m;
}

/// D: immigrant mark plus all event marks.
inline double functional_sum(const Cluster& cluster) noexcept {
  double s = cluster.immigrant_mark;
  for (const auto& e : cluster.events) s += e.mark;
  return s;
}

/// n i.i.d. (H, D, size) triples; replication i draws from stream
/// (seed, Clusters, i).
struct FunctionalSample {
  std::vector<double> max;
  std::vector<double> sum;
  std::vector<std::uint64_t> size;

  std::size_t n() const noexcept { return max.size(); }
};

template <class Model>
FunctionalSample batch_functionals(const Model& model, const ClusterParams& params, std::uint64_t n,
                                   std::uint64_t seed, unsigned workers = 1) {
  require(n >= 1, "batch needs n >= 1", "samples");
  FunctionalSample out;
  out.max.resize(n);
  out.sum.resize(n);
  out.size.resize(n);
  parallel_for(n, workers, [&](std::uint64_t i) {
    thread_local Cluster buffer;
    auto rng = RngStream::substream(seed, StreamPurpose::Clusters, i);
    try {
      sample_cluster(model, params, rng, buffer);
    } catch (ClusterOverflow& e) {
      e.set_replication(static_cast<std::int64_t>(i));
      throw;
    }
    out.max[i] = functional_max(buffer);
    out.sum[i] = functional_sum(buffer);
    out.size[i] = buffer.size();
  });
  return out;
}

}  // namespace cluster_tails
