// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include "cluster_tails/errors.hpp"
#include "cluster_tails/rng.hpp"

namespace cluster_tails {

//---------------------------------------------------------------------------//
// Marginal laws
//---------------------------------------------------------------------------//

/// Pareto law with survival (scale/x)^alpha above scale.
struct ParetoLaw {
  double scale = 1.0;
  double alpha = 1.5;

  void validate(const std::string& field = "pareto") const {
    require(scale > 0.0 && std::isfinite(scale), "Pareto scale must be positive", field + ".scale");
    require(alpha > 0.0 && std::isfinite(alpha), "Pareto alpha must be positive", field + ".alpha");
  }

  double survival(double x) const noexcept {
    if (x <= scale) return 1.0;
    return std::pow(scale / x, alpha);
  }

  bool has_mean() const noexcept { return alpha > 1.0; }
  double mean() const noexcept { return alpha * scale / (alpha - 1.0); }
  double median() const noexcept { return scale * std::pow(2.0, 1.0 / alpha); }

  double sample(RngStream& rng) const noexcept { return scale * std::pow(rng.uniform(), -1.0 / alpha); }

  /// Integral of the survival function over (-inf, y], shifted so that the
  /// value at 0 is 0. Differences of this give integrals of the survival.
  double integrated_survival(double y) const noexcept {
    if (y <= scale) return y;
    if (alpha == 1.0) return scale + scale * std::log(y / scale);
    return scale + scale / (alpha - 1.0) * (1.0 - std::pow(scale / y, alpha - 1.0));
  }
};

/// Laws with all moments finite; they provide the negligible-tail side of the
/// regime catalog.
struct LightLaw {
  enum class Kind { Exponential, Constant, BoundedUniform };

  Kind kind = Kind::Exponential;
  double a = 1.0;  // rate | value | lo
  double b = 0.0;  // unused | unused | hi

  static LightLaw exponential(double rate) { return {Kind::Exponential, rate, 0.0}; }
  static LightLaw constant(double value) { return {Kind::Constant, value, 0.0}; }
  static LightLaw uniform(double lo, double hi) { return {Kind::BoundedUniform, lo, hi}; }

  void validate(const std::string& field = "light") const {
    switch (kind) {
      case Kind::Exponential:
        require(a > 0.0 && std::isfinite(a), "exponential rate must be positive", field + ".rate");
        break;
      case Kind::Constant:
        require(a > 0.0 && std::isfinite(a), "constant value must be positive", field + ".value");
        break;
      case Kind::BoundedUniform:
        require(a >= 0.0 && b > a && std::isfinite(b), "uniform bounds must satisfy 0 <= lo < hi", field + ".hi");
        break;
    }
  }

  double survival(double x) const noexcept {
    switch (kind) {
      case Kind::Exponential: return x <= 0.0 ? 1.0 : std::exp(-a * x);
      case Kind::Constant: return x < a ? 1.0 : 0.0;
      case Kind::BoundedUniform:
        if (x <= a) return 1.0;
        if (x >= b) return 0.0;
        return (b - x) / (b - a);
    }
    return 0.0;
  }

  double mean() const noexcept {
    switch (kind) {
      case Kind::Exponential: return 1.0 / a;
      case Kind::Constant: return a;
      case Kind::BoundedUniform: return 0.5 * (a + b);
    }
    return 0.0;
  }

  double sample(RngStream& rng) const noexcept {
    switch (kind) {
      case Kind::Exponential: return rng.exponential(a);
      case Kind::Constant: return a;
      case Kind::BoundedUniform: return a + (b - a) * rng.uniform();
    }
    return 0.0;
  }

  double integrated_survival(double y) const noexcept {
    switch (kind) {
      case Kind::Exponential: return y <= 0.0 ? y : (1.0 - std::exp(-a * y)) / a;
      case Kind::Constant: return std::min(y, a);
      case Kind::BoundedUniform: {
        if (y <= a) return y;
        const double t = std::min(y, b);
        return a + ((b - a) * (b - a) - (b - t) * (b - t)) / (2.0 * (b - a));
      }
    }
    return 0.0;
  }
};

using MarkLaw = std::variant<ParetoLaw, LightLaw>;

inline double survival(const MarkLaw& law, double x) noexcept {
  return std::visit([x](const auto& l) { return l.survival(x); }, law);
}

inline double sample(const MarkLaw& law, RngStream& rng) noexcept {
  return std::visit([&rng](const auto& l) { return l.sample(rng); }, law);
}

inline double integrated_survival(const MarkLaw& law, double y) noexcept {
  return std::visit([y](const auto& l) { return l.integrated_survival(y); }, law);
}

inline const ParetoLaw* as_pareto(const MarkLaw& law) noexcept { return std::get_if<ParetoLaw>(&law); }

/// Exact survival of a Pareto law, clamped to 1 below the scale.
inline double pareto_survival(const ParetoLaw& law, double x) noexcept { return law.survival(x); }

inline double sample_pareto(const ParetoLaw& law, RngStream& rng) noexcept { return law.sample(rng); }

namespace detail {

/// sum_{k >= n0} k^{-alpha} for alpha > 1, n0 >= 1: direct sum over the first
/// terms, Euler-Maclaurin remainder after.
inline double zeta_tail(double alpha, std::uint64_t n0) {
  constexpr std::uint64_t kDirect = 2000;
  double sum = 0.0;
  const std::uint64_t n_switch = n0 + kDirect;
  for (std::uint64_t k = n_switch - 1; k >= n0; --k) {
    sum += std::pow(static_cast<double>(k), -alpha);
    if (k == n0) break;
  }
  const double n = static_cast<double>(n_switch);
  const double f = std::pow(n, -alpha);
  sum += n * f / (alpha - 1.0) + 0.5 * f + alpha * f / (12.0 * n) -
         alpha * (alpha + 1.0) * (alpha + 2.0) * f / (720.0 * n * n * n);
  return sum;
}

}  // namespace detail

/// Law of K = ceil(Z) with Z Pareto.
struct CeilParetoCount {
  ParetoLaw base;

  /// P(K > x) = P(Z > floor(x)) for x >= 0.
  double survival(double x) const noexcept {
    if (x < 0.0) return 1.0;
    return base.survival(std::floor(x));
  }

  double pmf(std::uint64_t k) const noexcept {
    if (k == 0) return 0.0;
    return base.survival(static_cast<double>(k - 1)) - base.survival(static_cast<double>(k));
  }

  /// E[ceil(Z)] = sum_{k >= 0} P(Z > k).
  double mean() const {
    const auto first_tail = static_cast<std::uint64_t>(std::ceil(base.scale));
    // Terms k = 0 .. first_tail - 1 are 1 (k < scale), the rest (scale/k)^alpha.
    return static_cast<double>(first_tail) + std::pow(base.scale, base.alpha) * detail::zeta_tail(base.alpha, std::max<std::uint64_t>(first_tail, 1));
  }

  std::uint64_t sample(RngStream& rng) const noexcept {
    constexpr double kCap = 4.0e18;
    return static_cast<std::uint64_t>(std::min(std::ceil(base.sample(rng)), kCap));
  }
};

//---------------------------------------------------------------------------//
// Joint mark models
//---------------------------------------------------------------------------//

enum class Regime {
  IndependentLightCount,
  IndependentHeavyCount,
  IndependentTailEquivalent,
  ComonotoneCount,
  HawkesLightIntensity,
  HawkesComonotoneIntensity,
};

enum class ModelFamily { Renewal, Hawkes };

inline const char* to_string(Regime r) noexcept {
  switch (r) {
    case Regime::IndependentLightCount: return "IndependentLightCount";
    case Regime::IndependentHeavyCount: return "IndependentHeavyCount";
    case Regime::IndependentTailEquivalent: return "IndependentTailEquivalent";
    case Regime::ComonotoneCount: return "ComonotoneCount";
    case Regime::HawkesLightIntensity: return "HawkesLightIntensity";
    case Regime::HawkesComonotoneIntensity: return "HawkesComonotoneIntensity";
  }
  return "?";
}

inline std::optional<Regime> parse_regime(const std::string& s) noexcept {
  for (auto r : {Regime::IndependentLightCount, Regime::IndependentHeavyCount, Regime::IndependentTailEquivalent,
                 Regime::ComonotoneCount, Regime::HawkesLightIntensity, Regime::HawkesComonotoneIntensity}) {
    if (s == to_string(r)) return r;
  }
  return std::nullopt;
}

struct RenewalPair {
  double mark;
  std::uint64_t count;
};

struct HawkesPair {
  double mark;
  double kappa;
};

using MarkPair = std::variant<RenewalPair, HawkesPair>;

struct ModelConstants {
  double mean_mark = 0.0;
  double mean_count = 0.0;  // E[K_A] or E[kappa_A]
  std::optional<double> max_constant_renewal;  // 1 + E[K_A]
  std::optional<double> max_constant_hawkes;   // 1 / (1 - E[kappa_A])
  std::optional<double> sum_shift_hawkes;      // E[X] / (1 - E[kappa_A])
};

/// Law of the pair (X, K_A) for renewal clusters or (X, kappa_A) for Hawkes
/// clusters. Built through the named constructors, which validate.
class JointMarkModel {
 public:
  /// The default renewal model: X ~ Pareto(1, 1.5), K ~ Poisson(2).
  JointMarkModel() : JointMarkModel(independent_light_count(ParetoLaw{1.0, 1.5}, 2.0)) {}

  /// X ~ mark, K ~ Poisson(poisson_mean), independent.
  static JointMarkModel independent_light_count(MarkLaw mark, double poisson_mean) {
    JointMarkModel m(Regime::IndependentLightCount, std::move(mark));
    m.poisson_mean_ = poisson_mean;
    m.validate();
    return m;
  }

  /// X ~ mark (lighter tail than K), K = ceil(Z), Z ~ count, independent.
  static JointMarkModel independent_heavy_count(MarkLaw mark, ParetoLaw count) {
    JointMarkModel m(Regime::IndependentHeavyCount, std::move(mark));
    m.count_law_ = count;
    m.validate();
    return m;
  }

  /// X ~ Pareto, K = ceil(Z), Z Pareto with the same index, independent.
  static JointMarkModel independent_tail_equivalent(ParetoLaw mark, ParetoLaw count) {
    JointMarkModel m(Regime::IndependentTailEquivalent, mark);
    m.count_law_ = count;
    m.validate();
    return m;
  }

  /// K = ceil(X).
  static JointMarkModel comonotone_count(MarkLaw mark) {
    JointMarkModel m(Regime::ComonotoneCount, std::move(mark));
    m.validate();
    return m;
  }

  /// kappa = target * V / E[V] with V ~ shape independent of X.
  static JointMarkModel hawkes_light_intensity(MarkLaw mark, double target_mean_kappa,
                                               LightLaw shape = LightLaw::uniform(0.0, 1.0)) {
    JointMarkModel m(Regime::HawkesLightIntensity, std::move(mark));
    m.target_mean_kappa_ = target_mean_kappa;
    m.kappa_shape_ = shape;
    m.validate();
    return m;
  }

  /// kappa = X * target / E[X].
  static JointMarkModel hawkes_comonotone_intensity(MarkLaw mark, double target_mean_kappa) {
    JointMarkModel m(Regime::HawkesComonotoneIntensity, std::move(mark));
    m.target_mean_kappa_ = target_mean_kappa;
    m.validate();
    return m;
  }

  Regime regime() const noexcept { return regime_; }
  ModelFamily family() const noexcept {
    return (regime_ == Regime::HawkesLightIntensity || regime_ == Regime::HawkesComonotoneIntensity)
               ? ModelFamily::Hawkes
               : ModelFamily::Renewal;
  }
  bool is_hawkes() const noexcept { return family() == ModelFamily::Hawkes; }

  const MarkLaw& mark_law() const noexcept { return mark_; }
  double poisson_mean() const noexcept { return poisson_mean_; }
  const ParetoLaw& count_law() const noexcept { return count_law_; }
  const LightLaw& kappa_shape() const noexcept { return kappa_shape_; }
  double target_mean_kappa() const noexcept { return target_mean_kappa_; }

  double mean_mark() const noexcept {
    return std::visit([](const auto& l) { return l.mean(); }, mark_);
  }

  /// E[K_A] for renewal regimes, E[kappa_A] for Hawkes regimes.
  double mean_count() const {
    switch (regime_) {
      case Regime::IndependentLightCount: return poisson_mean_;
      case Regime::IndependentHeavyCount:
      case Regime::IndependentTailEquivalent: return CeilParetoCount{count_law_}.mean();
      case Regime::ComonotoneCount: return mean_ceil_mark();
      case Regime::HawkesLightIntensity:
      case Regime::HawkesComonotoneIntensity: return target_mean_kappa_;
    }
    return 0.0;
  }

  RenewalPair sample_renewal_pair(RngStream& rng) const noexcept {
    const double x = cluster_tails::sample(mark_, rng);
    switch (regime_) {
      case Regime::IndependentLightCount: return {x, rng.poisson(poisson_mean_)};
      case Regime::IndependentHeavyCount:
      case Regime::IndependentTailEquivalent: return {x, CeilParetoCount{count_law_}.sample(rng)};
      case Regime::ComonotoneCount: return {x, static_cast<std::uint64_t>(std::ceil(x))};
      default: return {x, 0};
    }
  }

  HawkesPair sample_hawkes_pair(RngStream& rng) const noexcept {
    const double x = cluster_tails::sample(mark_, rng);
    if (regime_ == Regime::HawkesComonotoneIntensity) return {x, x * kappa_per_mark_};
    return {x, kappa_per_shape_ * kappa_shape_.sample(rng)};
  }

  /// Offspring marks in renewal clusters are i.i.d. from the mark law.
  double sample_offspring_mark(RngStream& rng) const noexcept { return cluster_tails::sample(mark_, rng); }

  /// Canonical text description; equal models describe identically.
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << to_string(regime_) << ";mark=" << describe_law(mark_);
    switch (regime_) {
      case Regime::IndependentLightCount: os << ";poisson_mean=" << poisson_mean_; break;
      case Regime::IndependentHeavyCount:
      case Regime::IndependentTailEquivalent:
        os << ";count=pareto(" << count_law_.scale << "," << count_law_.alpha << ")";
        break;
      case Regime::ComonotoneCount: break;
      case Regime::HawkesLightIntensity:
        os << ";target_mean_kappa=" << target_mean_kappa_ << ";kappa_shape=" << describe_law(MarkLaw{kappa_shape_});
        break;
      case Regime::HawkesComonotoneIntensity: os << ";target_mean_kappa=" << target_mean_kappa_; break;
    }
    return os.str();
  }

  static std::string describe_law(const MarkLaw& law) {
    std::ostringstream os;
    os.precision(17);
    if (const auto* p = std::get_if<ParetoLaw>(&law)) {
      os << "pareto(" << p->scale << "," << p->alpha << ")";
    } else {
      const auto& l = std::get<LightLaw>(law);
      switch (l.kind) {
        case LightLaw::Kind::Exponential: os << "exponential(" << l.a << ")"; break;
        case LightLaw::Kind::Constant: os << "constant(" << l.a << ")"; break;
        case LightLaw::Kind::BoundedUniform: os << "uniform(" << l.a << "," << l.b << ")"; break;
      }
    }
    return os.str();
  }

 private:
  JointMarkModel(Regime regime, MarkLaw mark) : regime_(regime), mark_(std::move(mark)) {}

  double mean_ceil_mark() const {
    if (const auto* p = std::get_if<ParetoLaw>(&mark_)) return CeilParetoCount{*p}.mean();
    const auto& l = std::get<LightLaw>(mark_);
    switch (l.kind) {
      case LightLaw::Kind::Constant: return std::ceil(l.a);
      case LightLaw::Kind::Exponential: {
        // sum_{k>=0} P(X > k) = 1 / (1 - e^{-rate}).
        return 1.0 / (1.0 - std::exp(-l.a));
      }
      case LightLaw::Kind::BoundedUniform: {
        double sum = 0.0;
        for (double k = 0.0; k < l.b; k += 1.0) sum += l.survival(k);
        return sum;
      }
    }
    return 0.0;
  }

  void validate() {
    std::visit([](const auto& l) { l.validate("mark"); }, mark_);
    if (const auto* p = std::get_if<ParetoLaw>(&mark_); p && !p->has_mean()) {
      fail(ErrorKind::InfiniteMean, "mark law has infinite mean (alpha <= 1)", "mark.alpha");
    }
    switch (regime_) {
      case Regime::IndependentLightCount:
        require(poisson_mean_ >= 0.0 && std::isfinite(poisson_mean_), "Poisson count mean must be >= 0",
                "poisson_mean");
        break;
      case Regime::IndependentHeavyCount:
      case Regime::IndependentTailEquivalent:
        count_law_.validate("count");
        if (!count_law_.has_mean()) {
          fail(ErrorKind::InfiniteMean, "count law has infinite mean (alpha <= 1)", "count.alpha");
        }
        if (regime_ == Regime::IndependentTailEquivalent) {
          const auto* p = std::get_if<ParetoLaw>(&mark_);
          require(p != nullptr, "tail-equivalent regime needs a Pareto mark law", "mark");
          require(p->alpha == count_law_.alpha, "tail-equivalent regime needs equal tail indices", "count.alpha");
        } else if (const auto* p = std::get_if<ParetoLaw>(&mark_)) {
          require(p->alpha > count_law_.alpha, "heavy-count regime needs a mark tail lighter than the count tail",
                  "mark.alpha");
        }
        break;
      case Regime::ComonotoneCount: break;
      case Regime::HawkesLightIntensity:
      case Regime::HawkesComonotoneIntensity: {
        require(std::isfinite(target_mean_kappa_) && target_mean_kappa_ >= 0.0, "mean intensity must be >= 0",
                "target_mean_kappa");
        if (target_mean_kappa_ >= 1.0) {
          fail(ErrorKind::SupercriticalModel, "Hawkes model must be subcritical: E[kappa] < 1", "target_mean_kappa");
        }
        if (regime_ == Regime::HawkesLightIntensity) {
          kappa_shape_.validate("kappa_shape");
          kappa_per_shape_ = target_mean_kappa_ / kappa_shape_.mean();
        } else {
          kappa_per_mark_ = target_mean_kappa_ / mean_mark();
        }
        break;
      }
    }
  }

  Regime regime_;
  MarkLaw mark_;
  double poisson_mean_ = 0.0;
  ParetoLaw count_law_{};
  LightLaw kappa_shape_ = LightLaw::uniform(0.0, 1.0);
  double target_mean_kappa_ = 0.0;
  double kappa_per_shape_ = 0.0;
  double kappa_per_mark_ = 0.0;
};

inline MarkPair sample_joint(const JointMarkModel& model, RngStream& rng) noexcept {
  if (model.is_hawkes()) return model.sample_hawkes_pair(rng);
  return model.sample_renewal_pair(rng);
}

inline ModelConstants model_constants(const JointMarkModel& model) {
  ModelConstants c;
  c.mean_mark = model.mean_mark();
  c.mean_count = model.mean_count();
  if (!std::isfinite(c.mean_mark)) fail(ErrorKind::InfiniteMean, "mark law has infinite mean", "mark");
  if (model.is_hawkes()) {
    if (c.mean_count >= 1.0) fail(ErrorKind::SupercriticalModel, "E[kappa] >= 1", "target_mean_kappa");
    c.max_constant_hawkes = 1.0 / (1.0 - c.mean_count);
    c.sum_shift_hawkes = c.mean_mark / (1.0 - c.mean_count);
  } else {
    c.max_constant_renewal = 1.0 + c.mean_count;
  }
  return c;
}

/// Expected number of events in [0, T] ignoring boundary truncation:
/// (1 + E[K]) nu T for renewal clusters, nu T / (1 - E[kappa]) for Hawkes.
inline double expected_events(const JointMarkModel& model, double nu, double horizon) {
  const auto c = model_constants(model);
  return nu * horizon * (model.is_hawkes() ? *c.max_constant_hawkes : *c.max_constant_renewal);
}

}  // namespace cluster_tails
