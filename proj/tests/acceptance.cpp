// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Sample sizes and tolerances are the pinned acceptance values; nothing here
// is scaled down.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cluster_tails/cli.hpp"

using namespace cluster_tails;
using cluster_tails::cli::json;
namespace fs = std::filesystem;

namespace {

const ParetoLaw kPareto{1.0, 1.5};
constexpr std::uint64_t kClusters = 10'000'000;

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS " : "FAIL ") << id << ": " << detail << std::endl;
}

/// Runs `body`, turning an escaped exception into a FAIL line.
void criterion(const std::string& id, const std::function<void()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "  [" << id << " took " << format_double(std::round(s * 10) / 10) << " s]" << std::endl;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct RatioRange {
  double lo = INFINITY;
  double hi = -INFINITY;
  std::size_t points = 0;

  void add(double r) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    ++points;
  }
  bool within(double a, double b) const { return points > 0 && lo >= a && hi <= b; }
  std::string str() const { return "ratio range [" + fmt(lo) + ", " + fmt(hi) + "] over " + std::to_string(points) + " points"; }
};

/// Ratio of the empirical tail to `denominator` on the 99%..99.99% quantile grid.
RatioRange ratio_on_grid(const TailSample& sample, const std::function<double(double)>& denominator) {
  RatioRange r;
  for (double x : quantile_grid(sample, default_quantile_levels())) {
    r.add(empirical_survival(sample, x).probability / denominator(x));
  }
  return r;
}

double pareto_tail(double x) { return kPareto.survival(x); }

void renewal_light() {
  const auto model = JointMarkModel::independent_light_count(kPareto, 2.0);
  const auto t0 = std::chrono::steady_clock::now();
  auto f = batch_functionals(model, RenewalParams{}, kClusters, 101, 1);
  const TailSample h(std::move(f.max));
  const auto c1 = ratio_on_grid(h, [](double x) { return 3.0 * pareto_tail(x); });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report("1 renewal-max", c1.within(0.90, 1.10) && wall <= 300.0,
         c1.str() + ", band [0.90, 1.10]; " + fmt(wall) + " s single-threaded, limit 300 s");
  const TailSample d(std::move(f.sum));
  const auto c2 = ratio_on_grid(d, [](double x) { return 3.0 * pareto_tail(x); });
  report("2a renewal-sum light count", c2.within(0.85, 1.15), c2.str() + ", band [0.85, 1.15]");
}

void renewal_heavy_count() {
  const auto model = JointMarkModel::independent_heavy_count(LightLaw::exponential(1.0), kPareto);
  auto f = batch_functionals(model, RenewalParams{}, kClusters, 102, workers());
  const TailSample d(std::move(f.sum));
  // E[X] = 1, so (E[X])^alpha P(K > x) = P(ceil(Z) > x) = floor(x)^-1.5.
  const auto r = ratio_on_grid(d, [](double x) { return std::pow(std::floor(x), -1.5); });
  report("2b renewal-sum heavy count", r.within(0.80, 1.20), r.str() + ", band [0.80, 1.20]");
}

void renewal_tail_equivalent() {
  const auto model = JointMarkModel::independent_tail_equivalent(kPareto, kPareto);
  auto f = batch_functionals(model, RenewalParams{}, kClusters, 103, workers());
  const TailSample d(std::move(f.sum));
  const auto grid = quantile_grid(d, default_quantile_levels());
  DenominatorOptions opts;
  opts.joint_term = JointTermSource::ForceOracle;
  opts.oracle.samples = kClusters;
  opts.oracle.seed = 1103;
  opts.oracle.workers = workers();
  const auto curve = ratio_curve(d, model, Target::RenewalSum, grid, opts);
  RatioRange r;
  for (double v : curve.ratio) r.add(v);
  // Tail constant lim x^a P(D > x) = 1 + E[X]^a + E[K].
  const double predicted = 1.0 + std::pow(3.0, 1.5) + model_constants(model).mean_count;
  const double x_top = grid.back();
  const double extracted = std::pow(x_top, 1.5) * empirical_survival(d, x_top).probability;
  report("2c renewal-sum tail-equivalent", r.within(0.80, 1.20),
         r.str() + ", band [0.80, 1.20]; tail constant extracted " + fmt(extracted) + " at x=" + fmt(x_top) +
             ", predicted 1 + E[X]^a + E[K] = " + fmt(predicted) + " (exponent -a would give " +
             fmt(1.0 + std::pow(3.0, -1.5) + model_constants(model).mean_count) + ")");
}

void hawkes_max() {
  const auto model = JointMarkModel::hawkes_light_intensity(kPareto, 0.5);
  auto f = batch_functionals(model, HawkesParams{}, kClusters, 104, workers());
  const TailSample h(std::move(f.max));
  const auto r = ratio_on_grid(h, [](double x) { return 2.0 * pareto_tail(x); });
  report("3 hawkes-max", r.within(0.90, 1.10), r.str() + ", band [0.90, 1.10]");
}

void hawkes_sum() {
  const auto model = JointMarkModel::hawkes_comonotone_intensity(kPareto, 0.5);
  auto f = batch_functionals(model, HawkesParams{}, kClusters, 105, workers());
  const TailSample d(std::move(f.sum));
  const auto r = ratio_on_grid(d, [](double x) { return 2.0 * std::pow(x / 2.0, -1.5); });
  report("4 hawkes-sum comonotone", r.within(0.80, 1.20), r.str() + ", band [0.80, 1.20]");
}

void mean_cluster_size() {
  std::ostringstream detail;
  bool pass = true;
  for (double k : {0.3, 0.5, 0.8}) {
    const auto model = JointMarkModel::hawkes_light_intensity(kPareto, k);
    const auto f = batch_functionals(model, HawkesParams{}, 1'000'000, 106, workers());
    double total = 0.0;
    for (auto s : f.size) total += static_cast<double>(s);
    const double mean = total / static_cast<double>(f.size.size());
    const double expected = 1.0 / (1.0 - k);
    const double rel = std::fabs(mean / expected - 1.0);
    pass = pass && rel <= 0.02;
    detail << "E[kappa]=" << k << ": " << fmt(mean) << " vs " << fmt(expected) << " (" << fmt(100 * rel) << "%) ";
  }
  report("5 mean cluster size", pass, detail.str() + "tolerance 2%");
}

void oracle_equivalence() {
  const auto model = DiscreteJointModel::renewal({{1.0, 1.0, 0.5}, {2.0, 2.0, 0.5}}, {{1.0, 0.5}, {2.0, 0.5}});
  const double max1 = exact_renewal_max_tail(model, 1.0);
  const double sum4 = exact_renewal_sum_tail(model, 4.0);
  auto f = batch_functionals(model, RenewalParams{}, 1'000'000, 107, workers());
  const TailSample h(std::move(f.max));
  const TailSample d(std::move(f.sum));
  // Every atom is an integer in [1, 6]; the KS distance is attained at atoms.
  std::vector<double> lattice;
  for (int x = 0; x <= 7; ++x) lattice.push_back(x);
  const auto sum_tail = exact_renewal_sum_tail(model, lattice);
  double ks_max = 0.0, ks_sum = 0.0;
  const double n = static_cast<double>(h.n());
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    ks_max = std::max(ks_max, std::fabs(static_cast<double>(h.exceedances(lattice[i])) / n -
                                        exact_renewal_max_tail(model, lattice[i])));
    ks_sum = std::max(ks_sum, std::fabs(static_cast<double>(d.exceedances(lattice[i])) / n - sum_tail[i]));
  }
  const bool pass = std::fabs(max1 - 0.75) < 1e-12 && std::fabs(sum4 - 0.375) < 1e-12 && ks_max <= 0.002 &&
                    ks_sum <= 0.002;
  report("6 oracle equivalence", pass,
         "exact max tail(1) = " + format_double(max1) + ", exact sum tail(4) = " + format_double(sum4) +
             ", KS max " + fmt(ks_max) + ", KS sum " + fmt(ks_sum) + ", tolerance 0.002");
}

void tauberian() {
  const auto s_grid = log_spaced(1e-3, 1e-1, 9);
  std::vector<double> marks(kClusters);
  parallel_for(kClusters, workers(), [&](std::uint64_t i) {
    auto rng = RngStream::substream(108, StreamPurpose::Marginal, i);
    marks[i] = kPareto.sample(rng);
  });
  const double pareto_slope = tauberian_slope(TailSample(std::move(marks)), 1.5, s_grid);
  auto f = batch_functionals(JointMarkModel{}, RenewalParams{}, kClusters, 108, workers());
  const double d_slope = tauberian_slope(TailSample(std::move(f.sum)), 1.5, s_grid);
  const bool pass = std::fabs(pareto_slope + 0.5) <= 0.15 && std::fabs(d_slope + 0.5) <= 0.15;
  report("7 tauberian slope", pass,
         "Pareto slope " + fmt(pareto_slope) + ", renewal-D slope " + fmt(d_slope) + ", target -0.5 +/- 0.15");
}

void hill_transfer() {
  struct Case {
    const char* name;
    JointMarkModel model;
    ClusterParams params;
  };
  const std::vector<Case> cases{
      {"light-count", JointMarkModel::independent_light_count(kPareto, 2.0), RenewalParams{}},
      {"tail-equivalent", JointMarkModel::independent_tail_equivalent(kPareto, kPareto), RenewalParams{}},
      {"hawkes-light", JointMarkModel::hawkes_light_intensity(kPareto, 0.5), HawkesParams{}},
      {"hawkes-comonotone", JointMarkModel::hawkes_comonotone_intensity(kPareto, 0.5), HawkesParams{}},
  };
  bool pass = true;
  std::ostringstream detail;
  for (const auto& c : cases) {
    auto f = batch_functionals(c.model, c.params, 1'000'000, 109, workers());
    const double ah = hill_estimator(TailSample(std::move(f.max)), 1000).alpha_hat;
    const double ad = hill_estimator(TailSample(std::move(f.sum)), 1000).alpha_hat;
    pass = pass && std::fabs(ah - 1.5) <= 0.2 && std::fabs(ad - 1.5) <= 0.2;
    detail << c.name << " H " << fmt(ah) << " D " << fmt(ad) << "; ";
  }
  report("8 hill transfer", pass, detail.str() + "target 1.5 +/- 0.2");
}

void expected_event_count() {
  bool pass = true;
  std::ostringstream detail;
  const std::vector<std::pair<const char*, WindowConfig>> cases{
      {"renewal", {JointMarkModel{}, RenewalParams{}, 1.0, 100.0}},
      {"hawkes", {JointMarkModel::hawkes_light_intensity(kPareto, 0.5), HawkesParams{}, 1.0, 100.0}},
  };
  for (const auto& [name, cfg] : cases) {
    const auto w = batch_windows(cfg, 100'000, 110, workers());
    const auto m = sample_mean(w, [](const WindowStats& s) { return static_cast<double>(s.n_events); });
    const double expected = cfg.expected_events();
    const double rel = std::fabs(m.mean / expected - 1.0);
    pass = pass && rel <= 0.05;
    detail << name << " " << fmt(m.mean) << " vs " << fmt(expected) << " (" << fmt(100 * rel) << "%); ";
  }
  report("9 expected events", pass, detail.str() + "tolerance 5%");
}

void ldp_sweeps() {
  SweepConfig cfg;
  cfg.window = {JointMarkModel{}, RenewalParams{}, 1.0, 1.0};
  cfg.horizons = {10.0, 50.0, 100.0};
  cfg.gamma = 0.5;
  cfg.replications = 1'000'000;
  cfg.seed = 111;
  cfg.workers = workers();
  const auto t0 = std::chrono::steady_clock::now();
  const auto mx = ldp_max_sweep(cfg);
  const auto sm = ldp_sum_sweep(cfg);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto line = [](const SweepResult& r) {
    std::string s;
    for (const auto& h : r.horizons) {
      s += "T=" + format_double(h.horizon) + " sup " + fmt(h.sup_abs_dev) + " (" + std::to_string(h.certified_points) +
           " pts) ";
    }
    return s;
  };
  const bool max_ok = sup_nonincreasing(mx.horizons) && mx.horizons.back().sup_abs_dev < 0.3 &&
                      mx.horizons.back().certified_points > 0;
  const bool sum_ok = sup_nonincreasing(sm.horizons) && sm.horizons.back().sup_abs_dev < 0.3 &&
                      sm.horizons.back().certified_points > 0;
  report("10 ldp sweeps", max_ok && sum_ok,
         "max: " + line(mx) + (max_ok ? "ok" : "violated") + "; sum: " + line(sm) + (sum_ok ? "ok" : "violated") +
             "; cap 0.3 at T=100; " + fmt(wall) + " s on " + std::to_string(workers()) + " worker(s)");
}

void leftover() {
  bool pass = true;
  std::ostringstream detail;
  const std::vector<std::pair<const char*, WindowConfig>> cases{
      {"renewal", {JointMarkModel{}, RenewalParams{}, 1.0, 1.0}},
      {"hawkes", {JointMarkModel::hawkes_light_intensity(kPareto, 0.5), HawkesParams{}, 1.0, 1.0}},
  };
  for (const auto& [name, window] : cases) {
    SweepConfig cfg;
    cfg.window = window;
    cfg.horizons = {10.0, 50.0, 100.0, 500.0};
    cfg.replications = 100'000;
    cfg.seed = 112;
    cfg.workers = workers();
    const auto rows = leftover_scaling(cfg);
    bool j_dec = true, e_dec = true;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      j_dec = j_dec && rows[i].j_over_t < rows[i - 1].j_over_t;
      e_dec = e_dec && rows[i].eps_over_sqrt_t < rows[i - 1].eps_over_sqrt_t;
    }
    pass = pass && j_dec && e_dec;
    detail << name << " J/T";
    for (const auto& r : rows) detail << ' ' << fmt(r.j_over_t);
    detail << " eps/sqrtT";
    for (const auto& r : rows) detail << ' ' << fmt(r.eps_over_sqrt_t);
    detail << "; ";
  }
  report("11 leftover scaling", pass, detail.str() + "strictly decreasing required");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism() {
  const auto root = fs::temp_directory_path() / "cluster-tails-acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "support.csv") << "x_value,k_value_or_kappa,probability\n1,1,0.5\n2,2,0.5\n";
  std::ofstream(root / "offspring.csv") << "mark,probability\n1,0.5\n2,0.5\n";
  std::ofstream(root / "hawkes.csv") << "x_value,k_value_or_kappa,probability\n1,0.2,0.5\n2,0.4,0.5\n";
  const json renewal{{"regime", "IndependentLightCount"}};
  const json tail_eq{{"regime", "IndependentTailEquivalent"}};
  const json hawkes{{"regime", "HawkesLightIntensity"}};
  const std::vector<json> configs{
      {{"experiment", "cluster-tails"}, {"seed", 1}, {"samples", 100000}, {"model", hawkes}},
      {{"experiment", "tail-ratio"}, {"seed", 2}, {"samples", 200000}, {"target", "RenewalMax"},
       {"quantiles", {0.9, 0.99, 0.999}}, {"model", renewal}},
      {{"experiment", "tail-ratio"},
       {"seed", 3},
       {"samples", 200000},
       {"target", "RenewalSum"},
       {"quantiles", {0.9, 0.99, 0.999}},
       {"model", tail_eq},
       {"denominator", {{"joint_term", "oracle"}, {"oracle_samples", 200000}}}},
      {{"experiment", "hill"}, {"seed", 4}, {"samples", 100000}, {"model", hawkes}},
      {{"experiment", "tauberian"}, {"seed", 5}, {"samples", 1000000}, {"model", renewal}},
      {{"experiment", "oracle-compare"},
       {"seed", 6},
       {"samples", 100000},
       {"discrete", {{"support_csv", "support.csv"}, {"offspring_csv", "offspring.csv"}}}},
      {{"experiment", "oracle-compare"},
       {"seed", 7},
       {"samples", 100000},
       {"discrete", {{"kind", "hawkes"}, {"support_csv", "hawkes.csv"}}}},
      {{"experiment", "ldp-max"}, {"seed", 8}, {"horizons", {10, 20}}, {"replications", 20000}, {"model", renewal}},
      {{"experiment", "ldp-sum"},
       {"seed", 9},
       {"horizons", {10, 20}},
       {"replications", 20000},
       {"pilot", 5000},
       {"model", hawkes}},
      {{"experiment", "leftover"}, {"seed", 10}, {"horizons", {10, 20}}, {"replications", 20000}, {"model", hawkes}},
  };
  bool pass = true;
  std::ostringstream bad;
  for (const auto& raw : configs) {
    const auto cfg = cli::parse_config(raw, root);
    const auto a = cli::run_config(cfg, {1u, root / "w1"});
    const auto b = cli::run_config(cfg, {4u, root / "w4"});
    // Rerun from the manifest the first run recorded.
    const auto manifest = json::parse(slurp(a.json))["manifest"];
    const auto c = cli::run_config(cli::parse_config(manifest["config"], root), {2u, root / "replay"});
    const auto ref = slurp(a.csv);
    if (ref.empty() || ref != slurp(b.csv) || ref != slurp(c.csv)) {
      pass = false;
      bad << ' ' << a.csv.filename().string();
    }
  }
  fs::remove_all(root);
  report("12 determinism", pass,
         std::to_string(configs.size()) + " experiment configs rerun at 1, 4 and 2 workers (manifest replay)" +
             (pass ? ", all CSVs byte-identical" : ", differing:" + bad.str()));
}

}  // namespace

int main() {
  std::cout << "cluster_tails acceptance, " << workers() << " worker(s)" << std::endl;
  criterion("1/2a", renewal_light);
  criterion("2b", renewal_heavy_count);
  criterion("2c", renewal_tail_equivalent);
  criterion("3", hawkes_max);
  criterion("4", hawkes_sum);
  criterion("5", mean_cluster_size);
  criterion("6", oracle_equivalence);
  criterion("7", tauberian);
  criterion("8", hill_transfer);
  criterion("9", expected_event_count);
  criterion("10", ldp_sweeps);
  criterion("11", leftover);
  criterion("12", determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion line(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
