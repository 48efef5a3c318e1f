#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "cluster_tails/ldp.hpp"

using namespace cluster_tails;

namespace {

const ParetoLaw kPareto{1.0, 1.5};

SweepConfig sweep(JointMarkModel model, ClusterParams cluster, std::vector<double> horizons, std::uint64_t reps,
                  std::uint64_t seed) {
  SweepConfig c;
  c.window = {std::move(model), std::move(cluster), 1.0, horizons.front()};
  c.horizons = std::move(horizons);
  c.replications = reps;
  c.seed = seed;
  return c;
}

SweepConfig poisson_only(std::vector<double> horizons, std::uint64_t reps, std::uint64_t seed) {
  return sweep(JointMarkModel::independent_light_count(kPareto, 0.0), RenewalParams{}, std::move(horizons), reps, seed);
}

}  // namespace

TEST(SweepConfig, Validation) {
  auto c = poisson_only({10.0, 50.0}, 10'000, 1);
  EXPECT_NO_THROW(c.validate());
  c.horizons = {50.0, 10.0};
  EXPECT_THROW(c.validate(), Error);
  c.horizons = {10.0};
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c.gamma = 0.5;
  c.replications = 9'999;
  EXPECT_THROW(c.validate(), Error);
}

TEST(LdpMax, CompoundPoissonMatchesPoissonThinning) {
  // Without offspring the window max exceeds x iff a Poisson(lambda) count of
  // exceedances is positive, lambda = nu T P(X > x): the ratio is exactly
  // (1 - e^-lambda) / lambda.
  const auto r = ldp_max_sweep(poisson_only({50.0}, 1'000'000, 2));
  ASSERT_EQ(r.horizons.size(), 1u);
  ASSERT_GT(r.horizons[0].certified_points, 0u);
  for (const auto& row : r.rows) {
    if (!row.certified) continue;
    const double lambda = 50.0 * pareto_survival(kPareto, row.x);
    const double exact = -std::expm1(-lambda) / lambda;
    const double se = std::sqrt(row.empirical * (1.0 - row.empirical) / 1e6) / row.denominator;
    EXPECT_NEAR(row.ratio, exact, 5.0 * se) << row.x;
  }
  const double lambda_low = 50.0 * pareto_survival(kPareto, 25.0);
  EXPECT_NEAR(r.horizons[0].sup_abs_dev, 1.0 + std::expm1(-lambda_low) / lambda_low, 0.005);
}

TEST(LdpMax, GridStartsAtGammaNuT) {
  const auto cfg = poisson_only({10.0, 20.0}, 20'000, 3);
  const auto r = ldp_max_sweep(cfg);
  for (const auto& row : r.rows) EXPECT_GE(row.x, cfg.gamma * cfg.window.nu * row.horizon);
  EXPECT_EQ(r.rows.size(), 2 * cfg.x_levels);
}

TEST(LdpMax, DenominatorIsExpectedEventsTimesSurvival) {
  auto cfg = sweep(JointMarkModel::independent_light_count(kPareto, 2.0), RenewalParams{}, {10.0}, 20'000, 4);
  const auto r = ldp_max_sweep(cfg);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.denominator, 30.0 * pareto_survival(kPareto, row.x));
  }
}

TEST(LdpMax, BandsContainRatio) {
  const auto r = ldp_max_sweep(sweep(JointMarkModel::hawkes_light_intensity(kPareto, 0.5), HawkesParams{}, {10.0, 20.0},
                                     50'000, 5));
  for (const auto& row : r.rows) {
    EXPECT_GT(row.denominator, 0.0);
    if (row.exceedances >= 50) {
      EXPECT_TRUE(row.certified);
      EXPECT_TRUE(std::isfinite(row.ci_low) && std::isfinite(row.ci_high));
      EXPECT_LE(row.ci_low, row.ratio);
      EXPECT_GE(row.ci_high, row.ratio);
    }
  }
}

TEST(LdpSum, CompoundPoissonRatio) {
  auto cfg = poisson_only({50.0}, 1'000'000, 6);
  const auto r = ldp_sum_sweep(cfg);
  EXPECT_NEAR(r.horizons[0].mean_sum, 150.0, 5.0 * r.horizons[0].mean_sum_se + 2.0);
  // Reference from an independent plain simulation (10^6 windows):
  // P(S - 150 > 25) / (50 P(X > 25)) = 0.438.
  EXPECT_NEAR(r.rows.front().ratio, 0.438, 0.02);
  std::size_t deep = 0;
  for (const auto& row : r.rows) {
    if (!row.certified || row.x < 200.0) continue;
    ++deep;
    EXPECT_NEAR(row.ratio, 1.0, 0.1) << row.x;
  }
  EXPECT_GT(deep, 0u);
}

TEST(LdpSum, HawkesLightIntensity) {
  auto cfg = sweep(JointMarkModel::hawkes_light_intensity(kPareto, 0.5), HawkesParams{}, {100.0}, 200'000, 7);
  const auto r = ldp_sum_sweep(cfg);
  std::size_t deep = 0;
  for (const auto& row : r.rows) {
    if (!row.certified || row.x < 400.0) continue;
    ++deep;
    EXPECT_GE(row.ratio, 0.8) << row.x;
    EXPECT_LE(row.ratio, 1.2) << row.x;
  }
  EXPECT_GT(deep, 0u);
  // The joint term collapses: denominator close to E[N_T] P(X > x).
  for (const auto& row : r.rows) {
    EXPECT_NEAR(row.denominator / (200.0 * pareto_survival(kPareto, row.x)), 1.0, 0.25) << row.x;
  }
}

TEST(LdpSweeps, DeterministicAcrossWorkers) {
  auto cfg = sweep(JointMarkModel::independent_light_count(kPareto, 2.0), RenewalParams{}, {5.0, 10.0}, 20'000, 8);
  cfg.pilot = 5'000;
  std::ostringstream a, b;
  write_csv(a, ldp_sum_sweep(cfg));
  cfg.workers = 3;
  write_csv(b, ldp_sum_sweep(cfg));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().rfind("horizon,x,exceedances,empirical,denominator,ratio,ci_low,ci_high,sup_abs_dev\n", 0), 0u);
}

TEST(SupNonincreasing, AllowsOneSmallInversion) {
  auto h = [](double dev, double se) {
    HorizonSummary s;
    s.sup_abs_dev = dev;
    s.sup_se = se;
    return s;
  };
  EXPECT_TRUE(sup_nonincreasing({h(0.5, 0.01), h(0.3, 0.01), h(0.2, 0.01)}));
  EXPECT_TRUE(sup_nonincreasing({h(0.5, 0.01), h(0.51, 0.01), h(0.2, 0.01)}));
  EXPECT_FALSE(sup_nonincreasing({h(0.5, 0.01), h(0.6, 0.01), h(0.2, 0.01)}));
  EXPECT_FALSE(sup_nonincreasing({h(0.5, 0.01), h(0.51, 0.01), h(0.52, 0.01)}));
}

TEST(Leftover, NoOffspringIsZero) {
  const auto rows = leftover_scaling(poisson_only({10.0, 50.0}, 10'000, 9));
  for (const auto& r : rows) {
    EXPECT_EQ(r.j_over_t, 0.0);
    EXPECT_EQ(r.eps_over_sqrt_t, 0.0);
  }
}

TEST(Leftover, RenewalDecreasing) {
  const auto rows = leftover_scaling(
      sweep(JointMarkModel::independent_light_count(kPareto, 2.0), RenewalParams{}, {10.0, 50.0, 100.0, 500.0}, 100'000, 10));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LT(rows[i].j_over_t, rows[i - 1].j_over_t) << rows[i].horizon;
    EXPECT_LT(rows[i].eps_over_sqrt_t, rows[i - 1].eps_over_sqrt_t) << rows[i].horizon;
  }
  EXPECT_LT(rows.back().j_over_t, 0.05 * rows.front().j_over_t);
}

TEST(Leftover, HawkesHalves) {
  const auto rows = leftover_scaling(
      sweep(JointMarkModel::hawkes_light_intensity(kPareto, 0.5), HawkesParams{}, {10.0, 500.0}, 100'000, 11));
  EXPECT_LT(rows[1].j_over_t, 0.5 * rows[0].j_over_t);
}
