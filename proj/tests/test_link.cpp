#include <gtest/gtest.h>

#include <cmath>

#include "mqi/decoherence.hpp"
#include "mqi/link_simulator.hpp"

using namespace mqi;

namespace {

LinkConfig link_at(double km, double tau0 = 1e-3) {
  LinkConfig l;
  l.separation_m = km * 1e3;
  l.memory_lifetime_s = tau0;
  return l;
}

// Strong heralding so that a few million cycles resolve the mode scaling.
NodeConfig boosted(int modes) {
  NodeConfig c;
  c.mode_count = modes;
  c.lifetimes_s.assign(static_cast<std::size_t>(modes), 1e-3);
  c.excitation_probability = 0.1;
  c.stokes_efficiency = 1.0;
  c.mfs_probability = 0.0;
  return c;
}

}  // namespace

TEST(AttemptInterval, Examples) {
  EXPECT_NEAR(attempt_interval(link_at(22)), 110e-6, 1e-15);
  EXPECT_NEAR(attempt_interval(link_at(200)), 1e-3, 1e-15);
  EXPECT_EQ(attempt_interval(link_at(0)), 0.0);
  EXPECT_THROW(attempt_interval(link_at(-1)), DomainError);
}

TEST(Feasibility, Examples) {
  const auto f = heralded_feasible(link_at(22));
  EXPECT_TRUE(f.feasible);
  EXPECT_NEAR(f.margin, 9.09, 0.01);
  EXPECT_FALSE(heralded_feasible(link_at(10, 50e-6)).feasible);
  // Strict inequality: equal lifetime and interval is not enough.
  EXPECT_FALSE(heralded_feasible(link_at(200)).feasible);
  EXPECT_TRUE(heralded_feasible(link_at(199.9)).feasible);
}

TEST(DeterministicRate, Examples) {
  LinkConfig l;
  auto r = deterministic_rate(l);
  EXPECT_DOUBLE_EQ(r.required_storage_s, 150.0);
  EXPECT_NEAR(r.rate_hz, 6.7e-3, 0.05e-3);
  l.multiplexed_qubits = 650;
  r = deterministic_rate(l);
  EXPECT_NEAR(r.required_storage_s, 0.231, 0.0005);
  EXPECT_NEAR(r.rate_hz, 4.33, 0.005);
  for (int n = 1; n <= 1000; n += 37) {
    l.multiplexed_qubits = n;
    r = deterministic_rate(l);
    EXPECT_NEAR(r.rate_hz * r.required_storage_s, 1.0, 1e-12);
    l.multiplexed_qubits = 1;
    EXPECT_NEAR(deterministic_rate(l).rate_hz * n, r.rate_hz, 1e-12);
  }
  l.multiplexed_qubits = 0;
  EXPECT_THROW(deterministic_rate(l), DomainError);
}

TEST(SimulateLink, RejectsZeroSeparationAndInfeasible) {
  const NodeConfig n;
  EXPECT_THROW(simulate_link(link_at(0), n, n, 10, 1), ConfigError);
  EXPECT_THROW(simulate_link(link_at(10, 50e-6), n, n, 10, 1), ConfigError);
}

TEST(SimulateLink, PerfectComponentsSucceedEveryCycle) {
  NodeConfig n;
  n.mode_count = 1;
  n.lifetimes_s = {1e-3};
  n.excitation_probability = 1.0;
  n.mfs_probability = 0.0;
  n.stokes_efficiency = 1.0;
  auto l = link_at(22, kUnbounded);
  l.attempt_success_probability = 1.0;
  std::uint64_t seen = 0;
  const auto r = simulate_link(l, n, n, 1000, 3, [&](const CycleRecord& c) {
    ++seen;
    EXPECT_TRUE(c.success);
    EXPECT_DOUBLE_EQ(c.age_s, 110e-6);
  });
  EXPECT_EQ(seen, 1000u);
  EXPECT_EQ(r.successes, 1000u);
  EXPECT_DOUBLE_EQ(r.p_success(), 1.0);
}

TEST(SimulateLink, SuccessNeedsMatchedHeralds) {
  const auto n = boosted(3);
  simulate_link(link_at(22), n, n, 200'000, 9, [](const CycleRecord& c) {
    if (c.success) {
      ASSERT_GE(c.bsm_mode, 1);
      ASSERT_GT(c.matched_pairs, 0);
      bool in_a = false, in_b = false;
      for (int m : c.heralded_a) in_a = in_a || m == c.bsm_mode;
      for (int m : c.heralded_b) in_b = in_b || m == c.bsm_mode;
      ASSERT_TRUE(in_a && in_b);
    }
    if (c.heralded_a.empty() || c.heralded_b.empty()) {
      ASSERT_FALSE(c.success);
    }
  });
}

TEST(SimulateLink, UnboundedLifetimeFactorizes) {
  const auto n = boosted(1);
  auto l = link_at(22, kUnbounded);
  const auto r = simulate_link(l, n, n, 2'000'000, 4);
  const double h = n.herald_probability();
  const double expected = h * h * l.attempt_success_probability;
  EXPECT_NEAR(r.p_success(), expected, 4.0 * std::sqrt(expected / r.cycles));
}

TEST(SimulateLink, SurvivalFactorApplied) {
  const auto n = boosted(1);
  const auto r = simulate_link(link_at(22), n, n, 2'000'000, 4);
  const double h = n.herald_probability();
  const double expected = h * h * 0.5 * std::exp(-110e-6 / 1e-3);
  EXPECT_NEAR(r.p_success(), expected, 4.0 * std::sqrt(expected / r.cycles));
}

TEST(SimulateLink, HeraldRateScalesWithModes) {
  NodeConfig n;
  const auto r = simulate_link(link_at(22), n, n, 2'000'000, 12);
  const double h = n.herald_probability();
  const double p = 1.0 - std::pow(1.0 - h, 3);
  const double got = static_cast<double>(r.herald_cycles_a) / static_cast<double>(r.cycles);
  EXPECT_NEAR(got, p, 4.0 * std::sqrt(p * (1 - p) / r.cycles));
  EXPECT_NEAR(p / (3 * h), 1.0, 0.01);
}

TEST(SimulateLink, ThreeModesTripleSuccessProbability) {
  const auto r1 = simulate_link(link_at(22), boosted(1), boosted(1), 4'000'000, 101);
  const auto r3 = simulate_link(link_at(22), boosted(3), boosted(3), 4'000'000, 103);
  EXPECT_NEAR(r3.p_success() / r1.p_success(), 3.0, 0.1);
}

TEST(SimulateLink, MonotoneInModeCount) {
  double prev = 0.0;
  for (int m : {1, 2, 3, 5}) {
    const auto r = simulate_link(link_at(22), boosted(m), boosted(m), 1'000'000, 50 + m);
    EXPECT_GT(r.p_success(), prev);
    prev = r.p_success();
  }
}

TEST(SimulateLink, DeterministicForSeed) {
  const NodeConfig n;
  const auto a = simulate_link(link_at(22), n, n, 100'000, 7);
  const auto b = simulate_link(link_at(22), n, n, 100'000, 7);
  EXPECT_EQ(a.successes, b.successes);
  EXPECT_EQ(a.herald_cycles_a, b.herald_cycles_a);
  EXPECT_EQ(a.herald_cycles_b, b.herald_cycles_b);
}
