// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cluster_tails/clusters.hpp"
#include "cluster_tails/errors.hpp"
#include "cluster_tails/estimate.hpp"
#include "cluster_tails/heavytail.hpp"
#include "cluster_tails/ldp.hpp"
#include "cluster_tails/oracle.hpp"
#include "cluster_tails/process.hpp"
#include "cluster_tails/tail_denominator.hpp"

namespace cluster_tails::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

enum class Experiment { ClusterTails, TailRatio, Hill, Tauberian, OracleCompare, LdpMax, LdpSum, Leftover };

inline const char* to_string(Experiment e) noexcept {
  switch (e) {
    case Experiment::ClusterTails: return "cluster-tails";
    case Experiment::TailRatio: return "tail-ratio";
    case Experiment::Hill: return "hill";
    case Experiment::Tauberian: return "tauberian";
    case Experiment::OracleCompare: return "oracle-compare";
    case Experiment::LdpMax: return "ldp-max";
    case Experiment::LdpSum: return "ldp-sum";
    case Experiment::Leftover: return "leftover";
  }
  return "?";
}

inline std::optional<Experiment> parse_experiment(const std::string& s) noexcept {
  for (auto e : {Experiment::ClusterTails, Experiment::TailRatio, Experiment::Hill, Experiment::Tauberian,
                 Experiment::OracleCompare, Experiment::LdpMax, Experiment::LdpSum, Experiment::Leftover}) {
    if (s == to_string(e)) return e;
  }
  return std::nullopt;
}

enum class Functional { Mark, Max, Sum };

struct ExperimentConfig {
  Experiment experiment = Experiment::TailRatio;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  fs::path output_dir = ".";
  json raw;  // the parsed file, embedded in the manifest

  std::optional<JointMarkModel> model;  // absent for oracle-compare
  ClusterParams cluster;
  std::uint64_t samples = 1'000'000;
  std::optional<Target> target;
  std::vector<double> quantiles = default_quantile_levels();
  std::vector<double> grid;  // explicit grid; overrides quantiles
  std::uint64_t min_exceedances = 50;
  DenominatorOptions denominator;

  std::optional<std::uint64_t> hill_k;

  Functional functional = Functional::Sum;
  std::optional<double> alpha;
  double s_low = 1e-3;
  double s_high = 1e-1;
  std::size_t s_count = 9;

  std::optional<DiscreteJointModel> discrete;
  HawkesTruncation truncation;

  SweepConfig sweep;

  std::string stem() const { return std::string(to_string(experiment)) + "-" + std::to_string(seed); }
};

//---------------------------------------------------------------------------//
// Parsing
//---------------------------------------------------------------------------//

namespace detail {

[[noreturn]] inline void config_error(const std::string& what, const std::string& field) {
  fail(ErrorKind::Config, what, field);
}

/// Typed access to one JSON object; remembers the keys read so that unknown
/// keys can be reported.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error("expected an object", path_.empty() ? "<root>" : path_);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const std::string& path() const noexcept { return path_; }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) config_error("missing required key", field(key));
    return j_.at(key);
  }

  Reader child(const std::string& key) { return Reader(raw(key), field(key)); }

  double number(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number()) config_error("expected a number", field(key));
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  std::uint64_t uint(const std::string& key) {
    const auto& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
    }
    config_error("expected a nonnegative integer", field(key));
  }
  std::uint64_t uint(const std::string& key, std::uint64_t fallback) { return has(key) ? uint(key) : fallback; }

  std::string string(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_string()) config_error("expected a string", field(key));
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_boolean()) config_error("expected true or false", field(key));
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_array()) config_error("expected an array of numbers", field(key));
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) config_error("expected an array of numbers", field(key));
      out.push_back(e.get<double>());
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) config_error("unknown key", field(it.key()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto with_field_prefix(const std::string& prefix, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (Error& e) {
    // Config errors already carry the full path.
    if (e.kind() == ErrorKind::Config) throw;
    e.set_field(e.field().empty() ? prefix : prefix + "." + e.field());
    throw;
  }
}

inline MarkLaw parse_law(Reader r) {
  const auto law = r.string("law");
  MarkLaw out;
  if (law == "pareto") {
    out = ParetoLaw{r.number("scale", 1.0), r.number("alpha")};
  } else if (law == "exponential") {
    out = LightLaw::exponential(r.number("rate", 1.0));
  } else if (law == "constant") {
    out = LightLaw::constant(r.number("value"));
  } else if (law == "uniform") {
    out = LightLaw::uniform(r.number("lo"), r.number("hi"));
  } else {
    config_error("unknown law '" + law + "' (pareto, exponential, constant, uniform)", r.field("law"));
  }
  r.finish();
  return out;
}

inline ParetoLaw parse_pareto(Reader r) {
  const auto field = r.field("law");
  const auto law = parse_law(std::move(r));
  const auto* p = as_pareto(law);
  if (!p) config_error("expected a pareto law", field);
  return *p;
}

inline LightLaw parse_light(Reader r) {
  const auto field = r.field("law");
  const auto law = parse_law(std::move(r));
  const auto* l = std::get_if<LightLaw>(&law);
  if (!l) config_error("expected a light-tailed law", field);
  return *l;
}

inline const ParetoLaw kDefaultPareto{1.0, 1.5};

inline JointMarkModel parse_model(Reader r) {
  const auto name = r.string("regime");
  const auto regime = parse_regime(name);
  if (!regime) config_error("unknown regime '" + name + "'", r.field("regime"));
  const MarkLaw mark = r.has("mark") ? parse_law(r.child("mark")) : MarkLaw{kDefaultPareto};
  auto build = [&]() -> JointMarkModel {
    switch (*regime) {
      case Regime::IndependentLightCount:
        return JointMarkModel::independent_light_count(mark, r.number("poisson_mean", 2.0));
      case Regime::IndependentHeavyCount: {
        const auto count = r.has("count") ? parse_pareto(r.child("count")) : kDefaultPareto;
        return JointMarkModel::independent_heavy_count(mark, count);
      }
      case Regime::IndependentTailEquivalent: {
        const auto* p = as_pareto(mark);
        if (!p) config_error("tail-equivalent regime needs a pareto mark", r.field("mark.law"));
        const auto count = r.has("count") ? parse_pareto(r.child("count")) : *p;
        return JointMarkModel::independent_tail_equivalent(*p, count);
      }
      case Regime::ComonotoneCount:
        return JointMarkModel::comonotone_count(mark);
      case Regime::HawkesLightIntensity: {
        const auto shape = r.has("kappa_shape") ? parse_light(r.child("kappa_shape")) : LightLaw::uniform(0.0, 1.0);
        return JointMarkModel::hawkes_light_intensity(mark, r.number("target_mean_kappa", 0.5), shape);
      }
      case Regime::HawkesComonotoneIntensity:
        return JointMarkModel::hawkes_comonotone_intensity(mark, r.number("target_mean_kappa", 0.5));
    }
    config_error("unknown regime", r.field("regime"));
  };
  auto model = with_field_prefix(r.path(), [&] { return build(); });
  r.finish();
  return model;
}

inline ClusterParams parse_cluster(std::optional<Reader> r, bool hawkes) {
  if (hawkes) {
    HawkesParams p;
    if (r) {
      p.decay_rate = r->number("decay_rate", p.decay_rate);
      p.max_cluster_events = r->uint("max_cluster_events", p.max_cluster_events);
      r->finish();
    }
    p.validate();
    return p;
  }
  RenewalParams p;
  if (r) {
    if (r->has("waiting")) p.waiting = parse_light(r->child("waiting"));
    r->finish();
  }
  p.validate();
  return p;
}

inline DenominatorOptions parse_denominator(Reader r, std::uint64_t fallback_seed) {
  DenominatorOptions d;
  const auto joint = r.string("joint_term", "auto");
  if (joint == "auto") {
    d.joint_term = JointTermSource::Auto;
  } else if (joint == "oracle") {
    d.joint_term = JointTermSource::ForceOracle;
  } else {
    config_error("joint_term must be 'auto' or 'oracle'", r.field("joint_term"));
  }
  d.oracle.enabled = r.boolean("oracle_enabled", true);
  d.oracle.samples = r.uint("oracle_samples", d.oracle.samples);
  d.oracle.seed = r.uint("oracle_seed", fallback_seed);
  if (r.has("cache_dir")) d.oracle.cache_dir = fs::path(r.string("cache_dir"));
  if (d.oracle.samples == 0) config_error("oracle needs at least one sample", r.field("oracle_samples"));
  r.finish();
  return d;
}

inline Functional parse_functional(const std::string& s, const std::string& field) {
  if (s == "mark") return Functional::Mark;
  if (s == "max") return Functional::Max;
  if (s == "sum") return Functional::Sum;
  config_error("functional must be mark, max or sum", field);
}

inline void check_levels(const std::vector<double>& q, const std::string& field) {
  if (q.empty()) config_error("expected at least one level", field);
  for (double v : q) {
    if (!(v > 0.0 && v < 1.0)) config_error("quantile levels must lie in (0, 1)", field);
  }
  if (!std::is_sorted(q.begin(), q.end())) config_error("quantile levels must be ascending", field);
}

}  // namespace detail

/// Parses and validates a config document. `base_dir` resolves relative
/// paths inside the document. Consumes no randomness.
inline ExperimentConfig parse_config(const json& doc, const fs::path& base_dir = {}) {
  using detail::config_error;
  detail::Reader r(doc, "");
  ExperimentConfig c;
  c.raw = doc;
  const auto name = r.string("experiment");
  const auto experiment = parse_experiment(name);
  if (!experiment) config_error("unknown experiment '" + name + "'", "experiment");
  c.experiment = *experiment;
  if (!r.has("seed")) config_error("seed is mandatory", "seed");
  c.seed = r.uint("seed");
  c.workers = static_cast<unsigned>(r.uint("workers", 1));
  if (c.workers == 0) config_error("workers must be positive", "workers");
  c.output_dir = r.string("output_dir", ".");
  c.samples = r.uint("samples", c.samples);
  c.min_exceedances = r.uint("min_exceedances", c.min_exceedances);

  if (c.experiment == Experiment::OracleCompare) {
    auto d = r.child("discrete");
    const auto kind_name = d.string("kind", "renewal");
    DiscreteJointModel::Kind kind;
    if (kind_name == "renewal") {
      kind = DiscreteJointModel::Kind::Renewal;
    } else if (kind_name == "hawkes") {
      kind = DiscreteJointModel::Kind::Hawkes;
    } else {
      config_error("kind must be 'renewal' or 'hawkes'", d.field("kind"));
    }
    auto resolve = [&](const std::string& p) { return fs::path(p).is_relative() ? base_dir / p : fs::path(p); };
    const auto support = resolve(d.string("support_csv"));
    std::optional<fs::path> offspring;
    if (d.has("offspring_csv")) offspring = resolve(d.string("offspring_csv"));
    if (d.has("max_children") || d.has("max_depth")) {
      c.truncation.max_children = static_cast<std::uint32_t>(d.uint("max_children", c.truncation.max_children));
      c.truncation.max_depth = static_cast<std::uint32_t>(d.uint("max_depth", c.truncation.max_depth));
    }
    d.finish();
    c.discrete = detail::with_field_prefix("discrete", [&] { return load_discrete_model(support, offspring, kind); });
    c.cluster = detail::parse_cluster(r.has("cluster") ? std::optional(r.child("cluster")) : std::nullopt,
                                      kind == DiscreteJointModel::Kind::Hawkes);
  } else {
    if (!r.has("model")) config_error("model is mandatory", "model");
    c.model = detail::parse_model(r.child("model"));
    c.cluster =
        detail::parse_cluster(r.has("cluster") ? std::optional(r.child("cluster")) : std::nullopt, c.model->is_hawkes());
    detail::with_field_prefix("model", [&] { return model_constants(*c.model); });
  }

  if (r.has("quantiles")) {
    c.quantiles = r.numbers("quantiles");
    detail::check_levels(c.quantiles, "quantiles");
  }
  if (r.has("grid")) {
    c.grid = r.numbers("grid");
    if (c.grid.empty() || !std::is_sorted(c.grid.begin(), c.grid.end())) {
      config_error("grid must be a nonempty ascending list", "grid");
    }
  }
  c.denominator = r.has("denominator") ? detail::parse_denominator(r.child("denominator"), derive_seed(c.seed, 0))
                                       : DenominatorOptions{};
  if (!r.has("denominator")) c.denominator.oracle.seed = derive_seed(c.seed, 0);

  switch (c.experiment) {
    case Experiment::TailRatio: {
      const auto t = r.string("target");
      const auto target = parse_target(t);
      if (!target) config_error("unknown target '" + t + "'", "target");
      c.target = target;
      check_target(*c.model, *c.target);
      break;
    }
    case Experiment::Hill:
      if (r.has("k")) {
        c.hill_k = r.uint("k");
        if (*c.hill_k < 2 || *c.hill_k >= c.samples) config_error("k must satisfy 2 <= k < samples", "k");
      }
      break;
    case Experiment::Tauberian: {
      c.functional = detail::parse_functional(r.string("functional", "sum"), "functional");
      if (r.has("alpha")) {
        c.alpha = r.number("alpha");
      } else if (const auto* p = as_pareto(c.model->mark_law())) {
        c.alpha = c.model->regime() == Regime::IndependentHeavyCount ? c.model->count_law().alpha : p->alpha;
      } else if (c.model->regime() == Regime::IndependentHeavyCount) {
        c.alpha = c.model->count_law().alpha;
      } else {
        config_error("alpha is required when the tail index cannot be read off the model", "alpha");
      }
      if (!(*c.alpha > 0.0) || *c.alpha == std::floor(*c.alpha)) {
        config_error("alpha must be positive and noninteger", "alpha");
      }
      if (r.has("s_grid")) {
        auto s = r.child("s_grid");
        c.s_low = s.number("lo", c.s_low);
        c.s_high = s.number("hi", c.s_high);
        c.s_count = s.uint("count", c.s_count);
        s.finish();
      }
      if (!(c.s_low > 0.0 && c.s_high > c.s_low && c.s_count >= 2)) {
        config_error("s_grid needs 0 < lo < hi and count >= 2", "s_grid");
      }
      break;
    }
    case Experiment::LdpMax:
    case Experiment::LdpSum:
    case Experiment::Leftover: {
      auto& s = c.sweep;
      s.window.model = *c.model;
      s.window.cluster = c.cluster;
      s.window.nu = r.number("nu", 1.0);
      s.horizons = r.numbers("horizons");
      s.gamma = r.number("gamma", s.gamma);
      s.replications = r.uint("replications", s.replications);
      s.x_levels = r.uint("x_levels", s.x_levels);
      s.pilot = r.uint("pilot", s.pilot);
      s.min_exceedances = c.min_exceedances;
      s.seed = c.seed;
      s.denominator = c.denominator;
      if (!s.horizons.empty()) s.window.horizon = s.horizons.front();
      s.validate();
      if (c.experiment == Experiment::LdpSum && s.pilot < 1000) config_error("pilot needs at least 1000 windows", "pilot");
      break;
    }
    case Experiment::ClusterTails:
    case Experiment::OracleCompare:
      break;
  }
  if (c.samples < 1) config_error("samples must be positive", "samples");
  r.finish();
  return c;
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot open config file " + path.string(), "<file>");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, std::string("malformed JSON: ") + e.what(), "<file>");
  }
}

inline ExperimentConfig load_config(const fs::path& path) {
  return parse_config(read_json_file(path), path.parent_path());
}

//---------------------------------------------------------------------------//
// Experiments
//---------------------------------------------------------------------------//

struct ExperimentOutput {
  std::string csv;
  json summary;
};

namespace detail {

inline json constants_json(const JointMarkModel& model) {
  const auto c = model_constants(model);
  json j{{"mean_mark", c.mean_mark}, {"mean_count", c.mean_count}};
  if (c.max_constant_renewal) j["max_constant_renewal"] = *c.max_constant_renewal;
  if (c.max_constant_hawkes) j["max_constant_hawkes"] = *c.max_constant_hawkes;
  if (c.sum_shift_hawkes) j["sum_shift_hawkes"] = *c.sum_shift_hawkes;
  return j;
}

inline json provenance_json(const Provenance& p) {
  json j{{"source", to_string(p.source)}};
  if (p.source == DenominatorSource::MonteCarlo) {
    j["samples"] = p.samples;
    j["seed"] = p.seed;
    j["cache_hit"] = p.cache_hit;
  }
  return j;
}

inline double expected_cluster_size(const JointMarkModel& model) {
  const auto c = model_constants(model);
  return model.is_hawkes() ? *c.max_constant_hawkes : *c.max_constant_renewal;
}

inline std::vector<double> grid_for(const ExperimentConfig& c, const TailSample& sample) {
  return c.grid.empty() ? quantile_grid(sample, c.quantiles) : c.grid;
}

inline ExperimentOutput run_cluster_tails(const ExperimentConfig& c) {
  const auto f = batch_functionals(*c.model, c.cluster, c.samples, c.seed, c.workers);
  const TailSample h(f.max);
  const TailSample d(f.sum);
  std::vector<double> sizes(f.size.begin(), f.size.end());
  const auto size_mean = sample_mean(sizes, [](double v) { return v; });
  const TailSample k(std::move(sizes));
  std::ostringstream os;
  os << "q,max,sum,size\n";
  for (double q : c.quantiles) {
    os << format_double(q) << ',' << format_double(h.quantile(q)) << ',' << format_double(d.quantile(q)) << ','
       << format_double(k.quantile(q)) << '\n';
  }
  const double expected = expected_cluster_size(*c.model);
  json s{{"samples", c.samples},
         {"mean_size", size_mean.mean},
         {"mean_size_se", size_mean.se},
         {"expected_size", expected},
         {"relative_size_error", std::fabs(size_mean.mean / expected - 1.0)}};
  return {os.str(), s};
}

inline ExperimentOutput run_tail_ratio(const ExperimentConfig& c) {
  const auto f = batch_functionals(*c.model, c.cluster, c.samples, c.seed, c.workers);
  const TailSample sample(is_sum_target(*c.target) ? f.sum : f.max);
  const auto grid = grid_for(c, sample);
  const auto curve = ratio_curve(sample, *c.model, *c.target, grid, c.denominator, {c.min_exceedances});
  std::ostringstream os;
  write_csv(os, curve);
  json s{{"target", to_string(*c.target)},
         {"samples", c.samples},
         {"max_abs_deviation", curve.max_abs_deviation()},
         {"ratio_min", *std::min_element(curve.ratio.begin(), curve.ratio.end())},
         {"ratio_max", *std::max_element(curve.ratio.begin(), curve.ratio.end())},
         {"denominator", provenance_json(curve.provenance)}};
  // Constant c in P(functional > x) ~ c P(X > x), read off the top of the grid.
  if (as_pareto(c.model->mark_law())) {
    const double x = curve.grid.back();
    s["tail_constant_estimate"] = curve.empirical.back() / survival(c.model->mark_law(), x);
  }
  return {os.str(), s};
}

inline ExperimentOutput run_hill(const ExperimentConfig& c) {
  const auto f = batch_functionals(*c.model, c.cluster, c.samples, c.seed, c.workers);
  const auto k = c.hill_k.value_or(default_hill_k(c.samples));
  const auto hmax = hill_estimator(TailSample(f.max), k);
  const auto hsum = hill_estimator(TailSample(f.sum), k);
  std::ostringstream os;
  os << "functional,n,k,alpha_hat,se\n";
  for (const auto& [name, est] : {std::pair{"max", hmax}, std::pair{"sum", hsum}}) {
    os << name << ',' << c.samples << ',' << est.k << ',' << format_double(est.alpha_hat) << ','
       << format_double(est.se) << '\n';
  }
  json s{{"k", k}, {"alpha_hat_max", hmax.alpha_hat}, {"alpha_hat_sum", hsum.alpha_hat}, {"se", hmax.se}};
  return {os.str(), s};
}

inline ExperimentOutput run_tauberian(const ExperimentConfig& c) {
  std::vector<double> values;
  if (c.functional == Functional::Mark) {
    values.resize(c.samples);
    parallel_for(c.samples, c.workers, [&](std::uint64_t i) {
      auto rng = RngStream::substream(c.seed, StreamPurpose::Marginal, i);
      values[i] = sample(c.model->mark_law(), rng);
    });
  } else {
    auto f = batch_functionals(*c.model, c.cluster, c.samples, c.seed, c.workers);
    values = c.functional == Functional::Max ? std::move(f.max) : std::move(f.sum);
  }
  const TailSample sample(std::move(values));
  const auto s_grid = log_spaced(c.s_low, c.s_high, c.s_count);
  const auto fit = tauberian_fit(sample, *c.alpha, s_grid);
  std::ostringstream os;
  os << "s,derivative,relative_se\n";
  for (const auto& p : fit.points) {
    os << format_double(p.s) << ',' << format_double(p.derivative) << ',' << format_double(p.relative_se) << '\n';
  }
  const double expected = *c.alpha - std::ceil(*c.alpha);
  json s{{"order", fit.order},
         {"slope", fit.slope},
         {"intercept", fit.intercept},
         {"expected_slope", expected},
         {"slope_error", std::fabs(fit.slope - expected)}};
  return {os.str(), s};
}

/// Kolmogorov distance between the empirical law of `sample` and a lattice
/// law given by its tail on `grid`, which must contain every jump point.
inline double lattice_ks(const TailSample& sample, std::span<const double> grid, std::span<const double> tail) {
  double ks = 0.0;
  const double n = static_cast<double>(sample.n());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ks = std::max(ks, std::fabs(static_cast<double>(sample.exceedances(grid[i])) / n - tail[i]));
  }
  return ks;
}

inline ExperimentOutput run_oracle_compare(const ExperimentConfig& c) {
  const auto& model = *c.discrete;
  const auto f = batch_functionals(model, c.cluster, c.samples, c.seed, c.workers);
  const TailSample h(f.max);
  const TailSample d(f.sum);
  std::vector<double> marks;
  for (const auto& p : model.support()) marks.push_back(p.x);
  for (const auto& a : model.offspring()) marks.push_back(a.mark);
  const double step = cluster_tails::detail::common_lattice_step(marks);
  const double top = c.grid.empty() ? d.values().back() + step : c.grid.back();
  const auto points = static_cast<std::size_t>(std::llround(top / step)) + 1;
  require(points <= 1'000'000, "lattice grid above 10^6 points; supply an explicit grid", "grid");
  std::vector<double> grid = c.grid;
  if (grid.empty()) {
    for (std::size_t i = 0; i < points; ++i) grid.push_back(static_cast<double>(i) * step);
  }
  std::ostringstream os;
  json s{{"samples", c.samples}, {"lattice_step", step}};
  if (model.kind() == DiscreteJointModel::Kind::Renewal) {
    std::vector<double> exact_max(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) exact_max[i] = exact_renewal_max_tail(model, grid[i]);
    const auto exact_sum = exact_renewal_sum_tail(model, grid);
    os << "x,exact_max,mc_max,exact_sum,mc_sum\n";
    const double n = static_cast<double>(c.samples);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      os << format_double(grid[i]) << ',' << format_double(exact_max[i]) << ','
         << format_double(static_cast<double>(h.exceedances(grid[i])) / n) << ',' << format_double(exact_sum[i])
         << ',' << format_double(static_cast<double>(d.exceedances(grid[i])) / n) << '\n';
    }
    s["ks_max"] = lattice_ks(h, grid, exact_max);
    s["ks_sum"] = lattice_ks(d, grid, exact_sum);
  } else {
    os << "x,mc_sum,lower,upper\n";
    const double n = static_cast<double>(c.samples);
    double worst = 0.0;
    double widest = 0.0;
    for (double x : grid) {
      const auto b = truncated_hawkes_sum_tail(model, x, c.truncation);
      const double p = static_cast<double>(d.exceedances(x)) / n;
      worst = std::max({worst, b.lower - p, p - b.upper});
      widest = std::max(widest, b.width());
      os << format_double(x) << ',' << format_double(p) << ',' << format_double(b.lower) << ','
         << format_double(b.upper) << '\n';
    }
    s["max_bracket_violation"] = worst;
    s["max_bracket_width"] = widest;
  }
  return {os.str(), s};
}

inline json horizons_json(const std::vector<HorizonSummary>& hs) {
  json arr = json::array();
  for (const auto& h : hs) {
    arr.push_back({{"horizon", h.horizon},
                   {"sup_abs_dev", h.sup_abs_dev},
                   {"sup_se", h.sup_se},
                   {"x_low", h.x_low},
                   {"x_certified", h.x_certified},
                   {"certified_points", h.certified_points},
                   {"expected_events", h.expected_events},
                   {"mean_sum", h.mean_sum},
                   {"mean_sum_se", h.mean_sum_se}});
  }
  return arr;
}

inline ExperimentOutput run_sweep(const ExperimentConfig& c) {
  auto cfg = c.sweep;
  cfg.workers = c.workers;
  cfg.denominator.oracle.workers = c.workers;
  const auto result = c.experiment == Experiment::LdpMax ? ldp_max_sweep(cfg) : ldp_sum_sweep(cfg);
  std::ostringstream os;
  write_csv(os, result);
  json s{{"horizons", horizons_json(result.horizons)}, {"sup_nonincreasing", sup_nonincreasing(result.horizons)}};
  if (c.experiment == Experiment::LdpSum) s["denominator"] = provenance_json(result.provenance);
  return {os.str(), s};
}

inline ExperimentOutput run_leftover(const ExperimentConfig& c) {
  auto cfg = c.sweep;
  cfg.workers = c.workers;
  const auto rows = leftover_scaling(cfg);
  std::ostringstream os;
  write_csv(os, rows);
  bool j_dec = true;
  bool eps_dec = true;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    j_dec = j_dec && rows[i].j_over_t < rows[i - 1].j_over_t;
    eps_dec = eps_dec && rows[i].eps_over_sqrt_t < rows[i - 1].eps_over_sqrt_t;
  }
  json s{{"j_over_t_decreasing", j_dec}, {"eps_over_sqrt_t_decreasing", eps_dec}};
  return {os.str(), s};
}

}  // namespace detail

inline ExperimentOutput run_experiment(const ExperimentConfig& c) {
  switch (c.experiment) {
    case Experiment::ClusterTails: return detail::run_cluster_tails(c);
    case Experiment::TailRatio: return detail::run_tail_ratio(c);
    case Experiment::Hill: return detail::run_hill(c);
    case Experiment::Tauberian: return detail::run_tauberian(c);
    case Experiment::OracleCompare: return detail::run_oracle_compare(c);
    case Experiment::LdpMax:
    case Experiment::LdpSum: return detail::run_sweep(c);
    case Experiment::Leftover: return detail::run_leftover(c);
  }
  fail(ErrorKind::Config, "unknown experiment", "experiment");
}

//---------------------------------------------------------------------------//
// Commands
//---------------------------------------------------------------------------//

enum ExitCode : int { kOk = 0, kConfigError = 2, kModelError = 3, kRuntimeError = 4 };

inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument: return kConfigError;
    case ErrorKind::SupercriticalModel:
    case ErrorKind::InfiniteMean:
    case ErrorKind::NoClosedForm:
    case ErrorKind::LatticeMismatch: return kModelError;
    default: return kRuntimeError;
  }
}

inline const char* error_category(int code) noexcept {
  switch (code) {
    case kConfigError: return "ConfigError";
    case kModelError: return "ModelError";
    default: return "RuntimeError";
  }
}

inline json error_record(const Error& e) {
  const int code = exit_code(e.kind());
  json j{{"error", error_category(code)}, {"kind", to_string(e.kind())}, {"message", e.what()}};
  if (!e.field().empty()) j["field"] = e.field();
  if (const auto* o = dynamic_cast<const ClusterOverflow*>(&e)) {
    j["events"] = o->events();
    j["limit"] = o->limit();
    if (o->replication() >= 0) j["replication"] = o->replication();
  }
  return j;
}

struct RunOverrides {
  std::optional<unsigned> workers;
  std::optional<fs::path> output_dir;
};

struct RunArtifacts {
  fs::path csv;
  fs::path json;
};

inline void write_file(const fs::path& path, const std::string& content) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string(), "output_dir");
    out << content;
    if (!out.flush()) fail(ErrorKind::Io, "cannot write " + tmp.string(), "output_dir");
  }
  fs::rename(tmp, path);
}

/// Runs one experiment and writes <experiment>-<seed>.csv and
/// <experiment>-<seed>.json; the JSON holds the manifest and the summary.
inline RunArtifacts run_config(ExperimentConfig c, const RunOverrides& overrides = {}) {
  if (overrides.workers) {
    require(*overrides.workers > 0, "workers must be positive", "workers");
    c.workers = *overrides.workers;
  }
  if (overrides.output_dir) c.output_dir = *overrides.output_dir;
  c.denominator.oracle.workers = c.workers;
  c.sweep.denominator.oracle.workers = c.workers;

  const auto started = std::chrono::steady_clock::now();
  const auto output = run_experiment(c);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory: " + ec.message(), "output_dir");
  RunArtifacts paths{c.output_dir / (c.stem() + ".csv"), c.output_dir / (c.stem() + ".json")};

  const std::string canonical = c.raw.dump();
  json manifest{{"experiment", to_string(c.experiment)},
                {"seed", c.seed},
                {"config_hash", format_hex(fnv1a(canonical))},
                {"config", c.raw},
                {"version", kVersion},
                {"compiler", __VERSION__},
                {"workers", c.workers},
                {"wall_time_seconds", wall},
                {"csv", paths.csv.filename().string()}};
  if (c.model) {
    manifest["model"] = c.model->describe();
    manifest["constants"] = detail::constants_json(*c.model);
  }
  const json report{{"manifest", manifest}, {"summary", output.summary}};
  write_file(paths.csv, output.csv);
  write_file(paths.json, report.dump(2) + "\n");
  return paths;
}

/// Full validation without simulation; prints key=value lines.
inline void print_validation(const ExperimentConfig& c, std::ostream& out) {
  out << "experiment=" << to_string(c.experiment) << '\n';
  out << "seed=" << c.seed << '\n';
  if (c.model) {
    const auto k = model_constants(*c.model);
    out << "model=" << c.model->describe() << '\n';
    out << "mean_mark=" << format_double(k.mean_mark) << '\n';
    out << "mean_count=" << format_double(k.mean_count) << '\n';
    if (k.max_constant_renewal) out << "max_constant_renewal=" << format_double(*k.max_constant_renewal) << '\n';
    if (k.max_constant_hawkes) out << "max_constant_hawkes=" << format_double(*k.max_constant_hawkes) << '\n';
    if (k.sum_shift_hawkes) out << "sum_shift_hawkes=" << format_double(*k.sum_shift_hawkes) << '\n';
  }
  if (c.discrete) {
    out << "discrete_kind=" << (c.discrete->kind() == DiscreteJointModel::Kind::Hawkes ? "hawkes" : "renewal")
        << '\n';
    out << "support_points=" << c.discrete->support().size() << '\n';
  }
}

template <class F>
int guarded(std::ostream& err, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    err << error_record(e).dump() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << json{{"error", "RuntimeError"}, {"kind", "IoError"}, {"message", e.what()}}.dump() << '\n';
    return kRuntimeError;
  } catch (const std::bad_alloc&) {
    err << json{{"error", "RuntimeError"}, {"kind", "OutOfMemory"}, {"message", "allocation failed"}}.dump() << '\n';
    return kRuntimeError;
  }
}

inline int run_command(const fs::path& config_path, const RunOverrides& overrides, std::ostream& out,
                       std::ostream& err) {
  return guarded(err, [&] {
    const auto paths = run_config(load_config(config_path), overrides);
    out << paths.csv.string() << '\n' << paths.json.string() << '\n';
    return int{kOk};
  });
}

inline int validate_command(const fs::path& config_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    print_validation(load_config(config_path), out);
    return int{kOk};
  });
}

}  // namespace cluster_tails::cli
