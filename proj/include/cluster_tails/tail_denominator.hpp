// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cluster_tails/errors.hpp"
#include "cluster_tails/heavytail.hpp"
#include "cluster_tails/parallel.hpp"
#include "cluster_tails/rng.hpp"

namespace cluster_tails {

/// Cluster functional whose asymptotic tail is being approximated.
enum class Target { RenewalMax, RenewalSum, HawkesMax, HawkesSum };

inline const char* to_string(Target t) noexcept {
  switch (t) {
    case Target::RenewalMax: return "RenewalMax";
    case Target::RenewalSum: return "RenewalSum";
    case Target::HawkesMax: return "HawkesMax";
    case Target::HawkesSum: return "HawkesSum";
  }
  return "?";
}

inline std::optional<Target> parse_target(const std::string& s) noexcept {
  for (auto t : {Target::RenewalMax, Target::RenewalSum, Target::HawkesMax, Target::HawkesSum}) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

inline bool is_sum_target(Target t) noexcept { return t == Target::RenewalSum || t == Target::HawkesSum; }
inline bool is_hawkes_target(Target t) noexcept { return t == Target::HawkesMax || t == Target::HawkesSum; }

inline void check_target(const JointMarkModel& model, Target target) {
  require(model.is_hawkes() == is_hawkes_target(target),
          std::string("target ") + to_string(target) + " does not apply to regime " + to_string(model.regime()),
          "target");
}

/// Shortest round-trip decimal text of a double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// FNV-1a, used to key cache records by model description.
inline std::uint64_t fnv1a(const std::string& s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Sixteen lowercase hex digits.
inline std::string format_hex(std::uint64_t v) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(v));
  return hex;
}

namespace detail {

inline double mark_support_floor(const MarkLaw& law) noexcept {
  if (const auto* p = std::get_if<ParetoLaw>(&law)) return p->scale;
  const auto& l = std::get<LightLaw>(law);
  switch (l.kind) {
    case LightLaw::Kind::Exponential: return 0.0;
    case LightLaw::Kind::Constant: return l.a;
    case LightLaw::Kind::BoundedUniform: return l.a;
  }
  return 0.0;
}

/// P(X + step * K > x) with K independent of X, given K's pmf and the tail
/// P(K >= k). Summation stops once x - step*k drops below the mark support,
/// where the survival is identically 1 and the remaining K-tail is added whole.
template <class Pmf, class TailFrom>
double independent_shift_tail(const MarkLaw& mark, double step, double x, Pmf&& pmf, TailFrom&& tail_from,
                              std::uint64_t k_first) {
  const double lo = mark_support_floor(mark);
  double total = 0.0;
  for (std::uint64_t k = k_first;; ++k) {
    const double y = x - step * static_cast<double>(k);
    if (y < lo) {
      total += tail_from(k);
      break;
    }
    const double p = pmf(k);
    total += p * survival(mark, y);
    if (p == 0.0 && static_cast<double>(k) > 1.0 && tail_from(k + 1) == 0.0) break;
  }
  return std::min(1.0, total);
}

}  // namespace detail

/// Whether the joint-tail term of the target has a closed form for this model.
/// Max targets never need the joint term.
inline bool has_closed_form(const JointMarkModel& model, Target target) noexcept {
  if (!is_sum_target(target)) return true;
  if (model.regime() == Regime::HawkesLightIntensity) {
    return model.target_mean_kappa() == 0.0 || model.kappa_shape().kind != LightLaw::Kind::Exponential;
  }
  return true;
}

/// Joint-tail term P(X + E[X] K_A > x) (renewal) or
/// P(X + E[X]/(1 - E[kappa]) kappa_A > x) (Hawkes), in closed form.
/// Throws NoClosedForm when the regime has none.
inline double joint_tail_closed_form(const JointMarkModel& model, double x) {
  const MarkLaw& mark = model.mark_law();
  const double mean_x = model.mean_mark();
  switch (model.regime()) {
    case Regime::IndependentLightCount: {
      const double lambda = model.poisson_mean();
      if (lambda == 0.0) return survival(mark, x);
      // Poisson pmf by recursion; the tail is 1 - cdf of the terms visited.
      double pmf = std::exp(-lambda);
      double cdf_below = 0.0;
      std::uint64_t last = 0;
      auto pmf_at = [&](std::uint64_t k) {
        while (last < k) {
          cdf_below += pmf;
          ++last;
          pmf *= lambda / static_cast<double>(last);
        }
        return pmf;
      };
      auto tail_from = [&](std::uint64_t k) {
        pmf_at(k);
        return std::max(0.0, 1.0 - cdf_below);
      };
      return detail::independent_shift_tail(mark, mean_x, x, pmf_at, tail_from, 0);
    }
    case Regime::IndependentHeavyCount:
    case Regime::IndependentTailEquivalent: {
      const CeilParetoCount count{model.count_law()};
      auto pmf = [&](std::uint64_t k) { return count.pmf(k); };
      auto tail_from = [&](std::uint64_t k) { return k == 0 ? 1.0 : count.base.survival(static_cast<double>(k - 1)); };
      return detail::independent_shift_tail(mark, mean_x, x, pmf, tail_from, 1);
    }
    case Regime::ComonotoneCount: {
      // g(X) = X + m ceil(X) is nondecreasing; on (n-1, n] it spans
      // (n-1 + m n, n + m n]. Find the first n with n + m n > x.
      if (x < 0.0) return 1.0;
      const double n = std::floor(x / (1.0 + mean_x)) + 1.0;
      const double threshold = std::max(n - 1.0, x - mean_x * n);
      return survival(mark, threshold);
    }
    case Regime::HawkesLightIntensity: {
      const double t = model.target_mean_kappa();
      const double shift = mean_x / (1.0 - t);
      if (t == 0.0) return survival(mark, x);
      const LightLaw& shape = model.kappa_shape();
      const double per_unit = t / shape.mean();
      switch (shape.kind) {
        case LightLaw::Kind::Constant: return survival(mark, x - shift * per_unit * shape.a);
        case LightLaw::Kind::BoundedUniform: {
          const double k_lo = per_unit * shape.a;
          const double k_hi = per_unit * shape.b;
          const double y_hi = x - shift * k_lo;
          const double y_lo = x - shift * k_hi;
          return (integrated_survival(mark, y_hi) - integrated_survival(mark, y_lo)) / (y_hi - y_lo);
        }
        case LightLaw::Kind::Exponential: break;
      }
      fail(ErrorKind::NoClosedForm, "no closed form for exponential intensity shape; enable the Monte Carlo oracle");
    }
    case Regime::HawkesComonotoneIntensity: {
      const double t = model.target_mean_kappa();
      const double shift = mean_x / (1.0 - t);
      return survival(mark, x / (1.0 + shift * t / mean_x));
    }
  }
  return 0.0;
}

/// Asymptotic approximation of P(functional > x), closed form only:
///   RenewalMax  (1 + E[K]) P(X > x)
///   RenewalSum  P(X + E[X] K > x) + E[K] P(X > x)
///   HawkesMax   P(X > x) / (1 - E[kappa])
///   HawkesSum   P(X + E[X]/(1 - E[kappa]) kappa > x) / (1 - E[kappa])
/// Throws NoClosedForm where the joint term requires the Monte Carlo oracle.
inline double theoretical_denominator(const JointMarkModel& model, Target target, double x) {
  check_target(model, target);
  require(x > 0.0, "denominator needs x > 0", "x");
  const auto c = model_constants(model);
  const double sx = survival(model.mark_law(), x);
  switch (target) {
    case Target::RenewalMax: return *c.max_constant_renewal * sx;
    case Target::RenewalSum: return joint_tail_closed_form(model, x) + c.mean_count * sx;
    case Target::HawkesMax: return *c.max_constant_hawkes * sx;
    case Target::HawkesSum: return *c.max_constant_hawkes * joint_tail_closed_form(model, x);
  }
  return 0.0;
}

//---------------------------------------------------------------------------//
// Monte Carlo oracle for the joint-tail term
//---------------------------------------------------------------------------//

enum class DenominatorSource { ClosedForm, MonteCarlo };

inline const char* to_string(DenominatorSource s) noexcept {
  return s == DenominatorSource::ClosedForm ? "closed-form" : "monte-carlo";
}

struct Provenance {
  DenominatorSource source = DenominatorSource::ClosedForm;
  std::uint64_t samples = 0;  // oracle only
  std::uint64_t seed = 0;     // oracle only
  bool cache_hit = false;
};

struct OracleSettings {
  bool enabled = true;
  std::uint64_t samples = 10'000'000;
  std::uint64_t seed = 0x0AC1E5EEDull;
  std::optional<std::filesystem::path> cache_dir;
  unsigned workers = 1;

  /// Cache directory: $CLUSTER_TAILS_CACHE when set, else the explicit
  /// setting, else none.
  std::optional<std::filesystem::path> resolved_cache_dir() const {
    if (const char* env = std::getenv("CLUSTER_TAILS_CACHE"); env && *env) return std::filesystem::path(env);
    return cache_dir;
  }
};

enum class JointTermSource { Auto, ForceOracle };

struct DenominatorOptions {
  JointTermSource joint_term = JointTermSource::Auto;
  OracleSettings oracle;
};

struct DenominatorValues {
  std::vector<double> values;
  Provenance provenance;
};

/// Sorted sample of the joint-tail variable Y = X + shift * K (or kappa).
class JointTailOracle {
 public:
  static constexpr std::uint64_t kChunk = 1 << 16;

  static JointTailOracle build(const JointMarkModel& model, std::uint64_t samples, std::uint64_t seed,
                               unsigned workers = 1) {
    require(samples > 0, "oracle needs at least one sample", "oracle.samples");
    const double mean_x = model.mean_mark();
    const double shift = model.is_hawkes() ? mean_x / (1.0 - model.target_mean_kappa()) : mean_x;
    JointTailOracle o;
    o.values_.resize(samples);
    const std::uint64_t chunks = (samples + kChunk - 1) / kChunk;
    parallel_for(chunks, workers, [&](std::uint64_t c) {
      auto rng = RngStream::substream(seed, StreamPurpose::Oracle, c);
      const std::uint64_t end = std::min(samples, (c + 1) * kChunk);
      for (std::uint64_t i = c * kChunk; i < end; ++i) {
        if (model.is_hawkes()) {
          const auto p = model.sample_hawkes_pair(rng);
          o.values_[i] = p.mark + shift * p.kappa;
        } else {
          const auto p = model.sample_renewal_pair(rng);
          o.values_[i] = p.mark + shift * static_cast<double>(p.count);
        }
      }
    });
    std::sort(o.values_.begin(), o.values_.end());
    return o;
  }

  double survival(double x) const noexcept {
    const auto above = values_.end() - std::upper_bound(values_.begin(), values_.end(), x);
    return static_cast<double>(above) / static_cast<double>(values_.size());
  }

  std::uint64_t size() const noexcept { return values_.size(); }

 private:
  std::vector<double> values_;
};

namespace detail {

inline std::filesystem::path cache_path(const std::filesystem::path& dir, const JointMarkModel& model,
                                        Target target) {
  return dir / (format_hex(fnv1a(model.describe())) + "-" + to_string(target) + ".csv");
}

struct CacheRecord {
  std::uint64_t seed = 0;
  std::uint64_t samples = 0;
  std::vector<std::pair<double, double>> rows;
};

inline std::optional<CacheRecord> read_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  CacheRecord rec;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) return std::nullopt;
  if (std::sscanf(line.c_str(), "# seed=%llu samples=%llu", reinterpret_cast<unsigned long long*>(&rec.seed),
                  reinterpret_cast<unsigned long long*>(&rec.samples)) != 2) {
    return std::nullopt;
  }
  if (!std::getline(in, line) || line != "x,probability") return std::nullopt;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) return std::nullopt;
    double x = 0.0, p = 0.0;
    if (std::from_chars(line.data(), line.data() + comma, x).ec != std::errc{}) return std::nullopt;
    if (std::from_chars(line.data() + comma + 1, line.data() + line.size(), p).ec != std::errc{}) return std::nullopt;
    rec.rows.emplace_back(x, p);
  }
  return rec;
}

inline void write_cache(const std::filesystem::path& path, const JointMarkModel& model, Target target,
                        const CacheRecord& rec) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write oracle cache " + tmp);
    out << "# seed=" << rec.seed << " samples=" << rec.samples << " target=" << to_string(target)
        << " model=" << model.describe() << '\n';
    out << "x,probability\n";
    for (const auto& [x, p] : rec.rows) out << format_double(x) << ',' << format_double(p) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Joint-tail term evaluated on a grid by the Monte Carlo oracle, reusing a
/// cached record when it was produced with the same seed and sample size and
/// covers every requested x.
inline DenominatorValues joint_tail_oracle(const JointMarkModel& model, Target target, std::span<const double> xs,
                                           const OracleSettings& settings) {
  if (!settings.enabled) {
    fail(ErrorKind::NoClosedForm, std::string("joint term of ") + to_string(target) +
                                      " has no closed form for " + to_string(model.regime()) +
                                      " and the Monte Carlo oracle is disabled");
  }
  DenominatorValues out;
  out.provenance = {DenominatorSource::MonteCarlo, settings.samples, settings.seed, false};
  out.values.resize(xs.size());

  const auto dir = settings.resolved_cache_dir();
  std::optional<detail::CacheRecord> cached;
  if (dir) {
    cached = detail::read_cache(detail::cache_path(*dir, model, target));
    if (cached && (cached->seed != settings.seed || cached->samples != settings.samples)) cached.reset();
  }
  if (cached) {
    bool all_found = true;
    for (std::size_t i = 0; i < xs.size() && all_found; ++i) {
      const auto it = std::find_if(cached->rows.begin(), cached->rows.end(),
                                   [x = xs[i]](const auto& row) { return row.first == x; });
      if (it == cached->rows.end()) {
        all_found = false;
      } else {
        out.values[i] = it->second;
      }
    }
    if (all_found) {
      out.provenance.cache_hit = true;
      return out;
    }
  }

  const auto oracle = JointTailOracle::build(model, settings.samples, settings.seed, settings.workers);
  for (std::size_t i = 0; i < xs.size(); ++i) out.values[i] = oracle.survival(xs[i]);

  if (dir) {
    detail::CacheRecord rec;
    rec.seed = settings.seed;
    rec.samples = settings.samples;
    if (cached) rec.rows = cached->rows;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const bool present = std::any_of(rec.rows.begin(), rec.rows.end(),
                                       [x = xs[i]](const auto& row) { return row.first == x; });
      if (!present) rec.rows.emplace_back(xs[i], out.values[i]);
    }
    std::sort(rec.rows.begin(), rec.rows.end());
    detail::write_cache(detail::cache_path(*dir, model, target), model, target, rec);
  }
  return out;
}

/// Denominator on a grid, using closed forms where available and the Monte
/// Carlo oracle for the joint term otherwise (or when forced).
inline DenominatorValues theoretical_denominator(const JointMarkModel& model, Target target,
                                                 std::span<const double> xs, const DenominatorOptions& options = {}) {
  check_target(model, target);
  for (double x : xs) require(x > 0.0, "denominator needs x > 0", "x");
  const bool use_oracle =
      is_sum_target(target) && (options.joint_term == JointTermSource::ForceOracle || !has_closed_form(model, target));
  if (!use_oracle) {
    DenominatorValues out;
    out.values.reserve(xs.size());
    for (double x : xs) out.values.push_back(theoretical_denominator(model, target, x));
    return out;
  }
  auto out = joint_tail_oracle(model, target, xs, options.oracle);
  const auto c = model_constants(model);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double j = out.values[i];
    out.values[i] = target == Target::RenewalSum ? j + c.mean_count * survival(model.mark_law(), xs[i])
                                                 : *c.max_constant_hawkes * j;
  }
  return out;
}

}  // namespace cluster_tails
