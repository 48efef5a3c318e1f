#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cluster_tails/process.hpp"

using namespace cluster_tails;

namespace {

const ParetoLaw kPareto{1.0, 1.5};

WindowConfig renewal_config(double lambda, double nu, double horizon, MarkLaw mark = kPareto) {
  return {JointMarkModel::independent_light_count(std::move(mark), lambda), RenewalParams{}, nu, horizon};
}

WindowConfig hawkes_config(double target, double horizon) {
  return {JointMarkModel::hawkes_light_intensity(kPareto, target), HawkesParams{}, 1.0, horizon};
}

double mean_events(const std::vector<WindowStats>& ws) {
  double s = 0.0;
  for (const auto& w : ws) s += static_cast<double>(w.n_events);
  return s / static_cast<double>(ws.size());
}

}  // namespace

TEST(SimulateWindow, TinyHorizonIsEmpty) {
  const auto cfg = renewal_config(2.0, 1.0, 1e-9);
  RngStream rng(1, 0);
  for (int i = 0; i < 1000; ++i) {
    const auto w = simulate_window(cfg, rng);
    EXPECT_EQ(w, WindowStats{});
  }
}

TEST(SimulateWindow, NoOffspringNoLeftover) {
  const auto ws = batch_windows(renewal_config(0.0, 2.0, 10.0), 100'000, 2);
  for (const auto& w : ws) {
    ASSERT_EQ(w.j_leftover, 0u);
    ASSERT_EQ(w.leftover_sum, 0.0);
    ASSERT_EQ(w.n_events, w.n_clusters);
  }
  EXPECT_NEAR(mean_events(ws) / 20.0, 1.0, 0.02);
}

TEST(SimulateWindow, PathwiseIdentities) {
  for (const auto& cfg : {renewal_config(2.0, 1.0, 20.0), hawkes_config(0.5, 20.0)}) {
    std::vector<StartedCluster> trace;
    for (std::uint64_t i = 0; i < 5000; ++i) {
      auto rng = RngStream::substream(3, StreamPurpose::Windows, i);
      const auto w = simulate_window(cfg, rng, &trace);
      ASSERT_EQ(trace.size(), w.n_clusters);
      double total = 0.0, max_cluster = 0.0;
      std::uint64_t events = 0;
      for (const auto& c : trace) {
        ASSERT_GE(c.start, 0.0);
        ASSERT_LE(c.start, cfg.horizon);
        total += c.sum;
        max_cluster = std::max(max_cluster, c.max);
        events += c.size;
      }
      ASSERT_EQ(w.n_events + w.j_leftover, events);
      ASSERT_NEAR(w.sum_in_window + w.leftover_sum, total, 1e-9 * std::max(1.0, total));
      ASSERT_LE(w.max_in_window, max_cluster);
      ASSERT_GE(w.n_events, w.n_clusters);
    }
  }
}

TEST(BatchWindows, ExpectedEventsRenewal) {
  const auto cfg = renewal_config(2.0, 1.0, 50.0);
  const double m = mean_events(batch_windows(cfg, 100'000, 4));
  EXPECT_LT(m, cfg.expected_events());
  EXPECT_NEAR(m / cfg.expected_events(), 1.0, 0.05);
}

TEST(BatchWindows, ExpectedEventsHawkes) {
  const auto cfg = hawkes_config(0.5, 100.0);
  const double m = mean_events(batch_windows(cfg, 100'000, 5));
  EXPECT_NEAR(m / 200.0, 1.0, 0.05);
}

TEST(BatchWindows, MeanClusterCount) {
  const auto cfg = renewal_config(2.0, 1.0, 10.0);
  const auto ws = batch_windows(cfg, 1'000'000, 6);
  double c = 0.0;
  for (const auto& w : ws) c += static_cast<double>(w.n_clusters);
  EXPECT_NEAR(c / 1e6 / 10.0, 1.0, 0.01);
}

TEST(BatchWindows, DeterministicAcrossWorkers) {
  const auto cfg = hawkes_config(0.5, 30.0);
  EXPECT_EQ(batch_windows(cfg, 20'000, 7, 1), batch_windows(cfg, 20'000, 7, 3));
}

TEST(BatchWindows, RejectsFamilyMismatch) {
  WindowConfig cfg{JointMarkModel::independent_light_count(kPareto, 2.0), HawkesParams{}, 1.0, 10.0};
  EXPECT_THROW(batch_windows(cfg, 10, 1), Error);
}

TEST(EstimateMeanSum, ConstantMarksNoOffspring) {
  const auto cfg = renewal_config(0.0, 1.0, 10.0, LightLaw::constant(1.0));
  const auto mu = estimate_mean_sum(cfg, 100'000, 8);
  EXPECT_NEAR(mu.mean, 10.0, 3.0 * mu.se);
}

TEST(EstimateMeanSum, BoundaryDeficit) {
  const auto cfg = renewal_config(2.0, 1.0, 20.0);
  const auto mu = estimate_mean_sum(cfg, 1'000'000, 9);
  EXPECT_GE(mu.mean, 162.0);
  EXPECT_LE(mu.mean, 180.0);
}

TEST(EstimateMeanSum, SeScaling) {
  const auto cfg = renewal_config(0.0, 1.0, 10.0, LightLaw::exponential(1.0));
  const auto a = estimate_mean_sum(cfg, 50'000, 10);
  const auto b = estimate_mean_sum(cfg, 100'000, 10);
  EXPECT_NEAR(a.se * a.se / (b.se * b.se), 2.0, 0.2);
}

TEST(EstimateMeanSum, PilotFloor) {
  EXPECT_THROW(estimate_mean_sum(renewal_config(2.0, 1.0, 10.0), 999, 1), Error);
}
