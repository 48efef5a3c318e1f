// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cluster_tails/errors.hpp"
#include "cluster_tails/heavytail.hpp"
#include "cluster_tails/rng.hpp"

namespace cluster_tails {

/// One atom of the joint law of (X, K) or (X, kappa).
struct SupportPoint {
  double x = 0.0;
  double second = 0.0;  // count k (renewal) or intensity kappa (Hawkes)
  double probability = 0.0;
};

struct MarkAtom {
  double mark = 0.0;
  double probability = 0.0;
};

/// Finite joint law used as ground truth. For the renewal reading `second` is
/// the offspring count and offspring marks follow `offspring`; for the Hawkes
/// reading `second` is kappa and every offspring redraws from `support`.
class DiscreteJointModel {
 public:
  enum class Kind { Renewal, Hawkes };

  static DiscreteJointModel renewal(std::vector<SupportPoint> support, std::vector<MarkAtom> offspring) {
    DiscreteJointModel m(Kind::Renewal, std::move(support), std::move(offspring));
    m.validate();
    return m;
  }

  static DiscreteJointModel hawkes(std::vector<SupportPoint> support) {
    DiscreteJointModel m(Kind::Hawkes, std::move(support), {});
    m.validate();
    return m;
  }

  Kind kind() const noexcept { return kind_; }
  ModelFamily family() const noexcept { return kind_ == Kind::Hawkes ? ModelFamily::Hawkes : ModelFamily::Renewal; }
  const std::vector<SupportPoint>& support() const noexcept { return support_; }
  const std::vector<MarkAtom>& offspring() const noexcept { return offspring_; }

  RenewalPair sample_renewal_pair(RngStream& rng) const noexcept {
    const auto& p = support_[pick(support_cdf_, rng)];
    return {p.x, static_cast<std::uint64_t>(p.second)};
  }

  double sample_offspring_mark(RngStream& rng) const noexcept { return offspring_[pick(offspring_cdf_, rng)].mark; }

  HawkesPair sample_hawkes_pair(RngStream& rng) const noexcept {
    const auto& p = support_[pick(support_cdf_, rng)];
    return {p.x, p.second};
  }

  /// P(X > x) from the support.
  double mark_survival(double x) const noexcept {
    double s = 0.0;
    for (const auto& p : support_) {
      if (p.x > x) s += p.probability;
    }
    return s;
  }

  double offspring_cdf(double x) const noexcept {
    double s = 0.0;
    for (const auto& a : offspring_) {
      if (a.mark <= x) s += a.probability;
    }
    return s;
  }

 private:
  DiscreteJointModel(Kind kind, std::vector<SupportPoint> support, std::vector<MarkAtom> offspring)
      : kind_(kind), support_(std::move(support)), offspring_(std::move(offspring)) {}

  static std::size_t pick(const std::vector<double>& cdf, RngStream& rng) noexcept {
    const double u = rng.uniform() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  }

  void validate() {
    require(!support_.empty(), "discrete model needs a nonempty support", "support");
    double total = 0.0;
    for (const auto& p : support_) {
      require(p.x >= 0.0 && p.second >= 0.0 && p.probability >= 0.0, "support values must be nonnegative",
              "support");
      if (kind_ == Kind::Renewal) {
        require(p.second == std::floor(p.second), "renewal counts must be integers", "support.k_value");
      }
      total += p.probability;
      support_cdf_.push_back(total);
    }
    require(std::fabs(total - 1.0) <= 1e-12, "support probabilities must sum to 1", "support.probability");
    if (kind_ == Kind::Renewal) {
      const bool needs_offspring = std::any_of(support_.begin(), support_.end(),
                                               [](const SupportPoint& p) { return p.second > 0.0 && p.probability > 0.0; });
      require(!needs_offspring || !offspring_.empty(), "offspring law is empty", "offspring");
      double o = 0.0;
      for (const auto& a : offspring_) {
        require(a.mark >= 0.0 && a.probability >= 0.0, "offspring values must be nonnegative", "offspring");
        o += a.probability;
        offspring_cdf_.push_back(o);
      }
      require(offspring_.empty() || std::fabs(o - 1.0) <= 1e-12, "offspring probabilities must sum to 1",
              "offspring.probability");
    }
  }

  Kind kind_;
  std::vector<SupportPoint> support_;
  std::vector<MarkAtom> offspring_;
  std::vector<double> support_cdf_;
  std::vector<double> offspring_cdf_;
};

//---------------------------------------------------------------------------//
// Lattice helpers
//---------------------------------------------------------------------------//

namespace detail {

/// Largest step h such that every value is an integer multiple of h, found
/// by a tolerant Euclid on the positive values. Throws LatticeMismatch when
/// the values share no step coarser than a millionth of their range.
inline double common_lattice_step(std::span<const double> values) {
  double h = 0.0;
  double largest = 0.0;
  for (double v : values) {
    if (v <= 0.0) continue;
    largest = std::max(largest, v);
    if (h == 0.0) {
      h = v;
      continue;
    }
    double a = std::max(h, v);
    double b = std::min(h, v);
    const double tol = 1e-9 * a;
    while (b > tol) {
      const double r = std::fmod(a, b);
      a = b;
      b = (r > tol && b - r > tol) ? r : 0.0;
    }
    h = a;
  }
  if (h == 0.0) return 1.0;
  if (h < largest * 1e-6) fail(ErrorKind::LatticeMismatch, "marks do not lie on a common lattice");
  for (double v : values) {
    const double q = v / h;
    if (std::fabs(q - std::round(q)) > 1e-6) fail(ErrorKind::LatticeMismatch, "marks do not lie on a common lattice");
  }
  return h;
}

inline std::size_t lattice_index(double v, double h) { return static_cast<std::size_t>(std::llround(v / h)); }

/// Measure on {0, h, ..., cap*h} plus one overflow cell at index cap+1 that
/// collects all mass above cap*h.
using CappedPmf = std::vector<double>;

inline CappedPmf convolve_capped(const CappedPmf& a, const CappedPmf& b) {
  const std::size_t cells = a.size();
  const std::size_t overflow = cells - 1;
  CappedPmf out(cells, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    if (a[i] == 0.0) continue;
    for (std::size_t j = 0; j < cells; ++j) {
      if (b[j] == 0.0) continue;
      const std::size_t k = (i == overflow || j == overflow) ? overflow : std::min(i + j, overflow);
      out[k] += a[i] * b[j];
    }
  }
  return out;
}

inline double mass_above(const CappedPmf& pmf, std::size_t index) {
  double s = 0.0;
  for (std::size_t i = index + 1; i < pmf.size(); ++i) s += pmf[i];
  return s;
}

}  // namespace detail

//---------------------------------------------------------------------------//
// Exact tails
//---------------------------------------------------------------------------//

/// P(H > x) = 1 - sum_{(x0, k)} 1{x0 <= x} P(X = x0, K = k) P(offspring <= x)^k.
inline double exact_renewal_max_tail(const DiscreteJointModel& model, double x) {
  require(model.kind() == DiscreteJointModel::Kind::Renewal, "model is not renewal-discrete", "model");
  const double g = model.offspring_cdf(x);
  double below = 0.0;
  for (const auto& p : model.support()) {
    if (p.x <= x) below += p.probability * std::pow(g, p.second);
  }
  return std::clamp(1.0 - below, 0.0, 1.0);
}

/// P(D > x) for every x in `xs` by exact lattice convolution: the offspring
/// law is convolved k times, shifted by x0 and accumulated per support atom.
inline std::vector<double> exact_renewal_sum_tail(const DiscreteJointModel& model, std::span<const double> xs) {
  require(model.kind() == DiscreteJointModel::Kind::Renewal, "model is not renewal-discrete", "model");
  std::vector<double> lattice;
  for (const auto& p : model.support()) lattice.push_back(p.x);
  for (const auto& a : model.offspring()) lattice.push_back(a.mark);
  const double h = detail::common_lattice_step(lattice);

  const double x_max = xs.empty() ? 0.0 : *std::max_element(xs.begin(), xs.end());
  if (x_max < 0.0) return std::vector<double>(xs.size(), 1.0);
  // Cells 0..cap hold exact values; cap+1 is "above cap*h >= x_max".
  const std::size_t cap = static_cast<std::size_t>(std::floor(x_max / h + 1e-9)) + 1;
  const std::size_t cells = cap + 2;
  const std::size_t overflow = cells - 1;

  detail::CappedPmf step(cells, 0.0);
  for (const auto& a : model.offspring()) step[std::min(detail::lattice_index(a.mark, h), overflow)] += a.probability;

  // Each offspring mark is >= min_mark, so k offspring push D past x_max once
  // k * min_mark > x_max and the convolution power is not needed.
  double min_mark = INFINITY;
  for (const auto& a : model.offspring()) {
    if (a.probability > 0.0) min_mark = std::min(min_mark, a.mark);
  }
  std::uint64_t k_needed = 0;
  for (const auto& p : model.support()) {
    if (p.probability > 0.0) k_needed = std::max(k_needed, static_cast<std::uint64_t>(p.second));
  }
  if (min_mark > 0.0 && std::isfinite(min_mark)) {
    k_needed = std::min<std::uint64_t>(k_needed, static_cast<std::uint64_t>(std::floor(x_max / min_mark)) + 1);
  }

  // powers[k] = k-fold convolution (capped).
  std::vector<detail::CappedPmf> powers;
  powers.reserve(k_needed + 1);
  detail::CappedPmf unit(cells, 0.0);
  unit[0] = 1.0;
  powers.push_back(std::move(unit));
  for (std::uint64_t k = 1; k <= k_needed; ++k) powers.push_back(detail::convolve_capped(powers.back(), step));

  std::vector<double> out(xs.size(), 0.0);
  for (std::size_t q = 0; q < xs.size(); ++q) {
    const double x = xs[q];
    double tail = 0.0;
    for (const auto& p : model.support()) {
      if (p.probability == 0.0) continue;
      if (p.x > x) {
        tail += p.probability;
        continue;
      }
      const auto k = static_cast<std::uint64_t>(p.second);
      if (k > k_needed) {
        tail += p.probability;  // k * min_mark > x_max >= x - x0
        continue;
      }
      // Need S_k > x - x0, i.e. lattice index > floor((x - x0)/h).
      const double room = (x - p.x) / h;
      const auto idx = static_cast<std::size_t>(std::floor(room + 1e-9));
      tail += p.probability * detail::mass_above(powers[k], std::min(idx, overflow));
    }
    out[q] = std::clamp(tail, 0.0, 1.0);
  }
  return out;
}

inline double exact_renewal_sum_tail(const DiscreteJointModel& model, double x) {
  const double xs[] = {x};
  return exact_renewal_sum_tail(model, std::span<const double>(xs))[0];
}

struct HawkesTruncation {
  std::uint32_t max_children = 8;
  std::uint32_t max_depth = 8;
};

struct TailBracket {
  double lower = 0.0;
  double upper = 1.0;

  double width() const noexcept { return upper - lower; }
  bool contains(double p) const noexcept { return lower <= p && p <= upper; }
};

/// Brackets P(D > x) for the Hawkes cluster sum. The recursion explores trees
/// of depth <= max_depth where every node has <= max_children children; the
/// explored sub-probability mu gives lower = mu(D > x) and
/// upper = mu(D > x) + (1 - mu(total)), i.e. truncated mass counted as an
/// exceedance. Throws BracketTooWide when `tolerance` is set and exceeded.
inline TailBracket truncated_hawkes_sum_tail(const DiscreteJointModel& model, double x,
                                             const HawkesTruncation& truncation,
                                             std::optional<double> tolerance = std::nullopt) {
  require(model.kind() == DiscreteJointModel::Kind::Hawkes, "model is not Hawkes-discrete", "model");
  std::vector<double> lattice;
  for (const auto& p : model.support()) lattice.push_back(p.x);
  const double h = detail::common_lattice_step(lattice);
  if (x < 0.0) return {1.0, 1.0};

  const std::size_t cap = static_cast<std::size_t>(std::floor(x / h + 1e-9));
  const std::size_t cells = cap + 2;
  const std::size_t overflow = cells - 1;

  // poisson[a][l] = P(L = l | kappa_a) for l <= max_children.
  std::vector<std::vector<double>> poisson;
  for (const auto& p : model.support()) {
    std::vector<double> row(truncation.max_children + 1);
    for (std::uint32_t l = 0; l <= truncation.max_children; ++l) {
      row[l] = p.second == 0.0 ? (l == 0 ? 1.0 : 0.0)
                               : std::exp(l * std::log(p.second) - p.second - std::lgamma(l + 1.0));
    }
    poisson.push_back(std::move(row));
  }

  // mu_d: explored sub-probability of the cluster sum with depth budget d.
  detail::CappedPmf mu(cells, 0.0);
  for (std::uint32_t depth = 0; depth <= truncation.max_depth; ++depth) {
    // Powers of the previous level's measure; at depth 0 children are not allowed.
    std::vector<detail::CappedPmf> powers;
    detail::CappedPmf unit(cells, 0.0);
    unit[0] = 1.0;
    powers.push_back(std::move(unit));
    const std::uint32_t children = depth == 0 ? 0 : truncation.max_children;
    for (std::uint32_t l = 1; l <= children; ++l) powers.push_back(detail::convolve_capped(powers.back(), mu));

    detail::CappedPmf next(cells, 0.0);
    for (std::size_t a = 0; a < model.support().size(); ++a) {
      const auto& atom = model.support()[a];
      if (atom.probability == 0.0) continue;
      const std::size_t shift = std::min(detail::lattice_index(atom.x, h), overflow);
      for (std::uint32_t l = 0; l <= children; ++l) {
        const double w = atom.probability * poisson[a][l];
        if (w == 0.0) continue;
        const auto& pw = powers[l];
        for (std::size_t i = 0; i < cells; ++i) {
          if (pw[i] == 0.0) continue;
          const std::size_t k = (i == overflow) ? overflow : std::min(i + shift, overflow);
          next[k] += w * pw[i];
        }
      }
    }
    mu = std::move(next);
  }

  const double total = std::accumulate(mu.begin(), mu.end(), 0.0);
  const double above = detail::mass_above(mu, cap);
  TailBracket b{std::clamp(above, 0.0, 1.0), std::clamp(above + (1.0 - total), 0.0, 1.0)};
  if (tolerance && b.width() > *tolerance) {
    fail(ErrorKind::BracketTooWide, "bracket width " + std::to_string(b.width()) + " exceeds tolerance");
  }
  return b;
}

//---------------------------------------------------------------------------//
// CSV loading
//---------------------------------------------------------------------------//

namespace detail {

inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path,
                                                         std::span<const std::string> header) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::string expected;
  for (std::size_t i = 0; i < header.size(); ++i) expected += (i ? "," : "") + header[i];
  while (std::getline(in, line) && (line.empty() || line[0] == '#')) {
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected) fail(ErrorKind::Config, path.string() + ": expected header '" + expected + "'");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      if (std::from_chars(p, comma, v).ec != std::errc{}) {
        fail(ErrorKind::Config, path.string() + ": malformed number in '" + line + "'");
      }
      row.push_back(v);
      p = comma + 1;
    }
    if (row.size() != header.size()) fail(ErrorKind::Config, path.string() + ": wrong column count in '" + line + "'");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

/// Support CSV: columns x_value,k_value_or_kappa,probability. Offspring CSV
/// (renewal only): columns mark,probability.
inline DiscreteJointModel load_discrete_model(const std::filesystem::path& support_csv,
                                              const std::optional<std::filesystem::path>& offspring_csv,
                                              DiscreteJointModel::Kind kind) {
  const std::string support_header[] = {"x_value", "k_value_or_kappa", "probability"};
  std::vector<SupportPoint> support;
  for (const auto& r : detail::read_numeric_csv(support_csv, support_header)) support.push_back({r[0], r[1], r[2]});
  if (kind == DiscreteJointModel::Kind::Hawkes) return DiscreteJointModel::hawkes(std::move(support));
  std::vector<MarkAtom> offspring;
  if (offspring_csv) {
    const std::string offspring_header[] = {"mark", "probability"};
    for (const auto& r : detail::read_numeric_csv(*offspring_csv, offspring_header)) offspring.push_back({r[0], r[1]});
  }
  return DiscreteJointModel::renewal(std::move(support), std::move(offspring));
}

}  // namespace cluster_tails
