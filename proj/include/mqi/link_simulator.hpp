#pragma once

// Elementary link between two multiplexed nodes: attempt timing over fiber,
// heralding feasibility against memory lifetime, deterministic-generation
// rate scaling and a cycle-level Monte Carlo of heralded entanglement.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mqi/errors.hpp"
#include "mqi/node_simulator.hpp"
#include "mqi/rng.hpp"

namespace mqi {

struct LinkConfig {
  double separation_m = 22e3;
  double fiber_speed_m_per_s = 2e8;
  double memory_lifetime_s = 1e-3;
  int multiplexed_qubits = 1;                  // N_m
  double attempt_success_probability = 0.5;    // station success per matched mode pair
  double required_storage_single_s = 150.0;    // deterministic generation at N_m = 1

  void validate() const {
    if (!(separation_m >= 0.0)) throw DomainError("node separation must be >= 0");
    if (!(fiber_speed_m_per_s > 0.0)) throw DomainError("fiber light speed must be > 0");
    if (!(memory_lifetime_s > 0.0)) throw DomainError("memory lifetime must be > 0");
    if (multiplexed_qubits < 1) throw DomainError("N_m must be >= 1");
    if (!(attempt_success_probability > 0.0 && attempt_success_probability <= 1.0)) {
      throw DomainError("attempt success probability must lie in (0, 1]");
    }
    if (!(required_storage_single_s > 0.0)) throw DomainError("required storage must be > 0");
  }
};

// Delta t = L0 / c.
inline double attempt_interval(const LinkConfig& link) {
  link.validate();
  return link.separation_m / link.fiber_speed_m_per_s;
}

struct Feasibility {
  bool feasible = false;
  double margin = 0.0;  // tau0 c / L0
};

// Heralding needs the memory to outlive one attempt: tau0 > L0 / c.
inline Feasibility heralded_feasible(const LinkConfig& link) {
  const double dt = attempt_interval(link);
  Feasibility f;
  f.feasible = link.memory_lifetime_s > dt;
  f.margin = dt > 0.0 ? link.memory_lifetime_s / dt : std::numeric_limits<double>::infinity();
  return f;
}

struct DeterministicRate {
  double required_storage_s = 0.0;
  double rate_hz = 0.0;
};

inline DeterministicRate deterministic_rate(const LinkConfig& link) {
  link.validate();
  const double n = static_cast<double>(link.multiplexed_qubits);
  return {link.required_storage_single_s / n, n / link.required_storage_single_s};
}

struct CycleRecord {
  std::uint64_t cycle = 0;
  std::vector<int> heralded_a;  // 1-based mode indices
  std::vector<int> heralded_b;
  int matched_pairs = 0;
  int bsm_mode = 0;  // mode whose station attempt succeeded, 0 if none
  bool survived = false;
  bool success = false;
  double age_s = 0.0;
};

struct LinkResult {
  double separation_m = 0.0;
  double dt_s = 0.0;
  Feasibility feasibility;
  std::uint64_t cycles = 0;
  std::uint64_t herald_cycles_a = 0;
  std::uint64_t herald_cycles_b = 0;
  std::uint64_t successes = 0;

  double p_success() const { return cycles ? static_cast<double>(successes) / cycles : 0.0; }
  double p_success_sigma() const {
    const double p = p_success();
    return cycles ? std::sqrt(p * (1.0 - p) / static_cast<double>(cycles)) : 0.0;
  }
  double rate_hz_wallclock() const {
    return cycles && dt_s > 0.0 ? static_cast<double>(successes) / (cycles * dt_s) : 0.0;
  }
};

/// Cycle-level simulation of one elementary link.
///
/// Each cycle both nodes run one write trial. Stokes photons of the same mode
/// index meet at the midpoint station, where each matched pair is an
/// independent attempt succeeding with `attempt_success_probability`; the
/// first success (lowest mode) is kept. The result reaches the nodes after
/// Delta t (Delta t / 2 each way), and the stored pair survives that wait with
/// probability exp(-Delta t / tau0).
inline LinkResult simulate_link(const LinkConfig& link, const NodeConfig& node_a,
                                const NodeConfig& node_b, std::uint64_t n_cycles,
                                std::uint64_t seed,
                                const std::function<void(const CycleRecord&)>& on_cycle = {}) {
  link.validate();
  node_a.validate();
  node_b.validate();
  if (!(link.separation_m > 0.0)) throw ConfigError("link simulation needs L0 > 0");
  const Feasibility feas = heralded_feasible(link);
  if (!feas.feasible) {
    throw ConfigError("link is not heralded-feasible: memory lifetime " +
                      std::to_string(link.memory_lifetime_s) + " s <= attempt interval " +
                      std::to_string(attempt_interval(link)) + " s");
  }
  LinkResult res;
  res.separation_m = link.separation_m;
  res.dt_s = attempt_interval(link);
  res.feasibility = feas;
  res.cycles = n_cycles;

  const double survival = std::isinf(link.memory_lifetime_s)
                              ? 1.0
                              : std::exp(-res.dt_s / link.memory_lifetime_s);
  const auto setting = PolarizationSetting::angles(0.0, 0.0);
  const PreparedSetting prep_a = PreparedSetting::make(node_a, setting, res.dt_s);
  const PreparedSetting prep_b = PreparedSetting::make(node_b, setting, res.dt_s);
  const int modes = std::min(node_a.mode_count, node_b.mode_count);

  TrialRecord ta;
  TrialRecord tb;
  CycleRecord rec;
  for (std::uint64_t cycle = 0; cycle < n_cycles; ++cycle) {
    RandomStream rng_a(seed, cycle, /*domain=*/0xa);
    RandomStream rng_b(seed, cycle, /*domain=*/0xb);
    RandomStream rng_station(seed, cycle, /*domain=*/0x5);
    simulate_trial(node_a, prep_a, rng_a, ta);
    simulate_trial(node_b, prep_b, rng_b, tb);
    if (ta.any_herald()) ++res.herald_cycles_a;
    if (tb.any_herald()) ++res.herald_cycles_b;

    rec.cycle = cycle;
    rec.matched_pairs = 0;
    rec.bsm_mode = 0;
    rec.survived = false;
    rec.success = false;
    rec.age_s = 0.0;
    if (on_cycle) {
      rec.heralded_a.clear();
      rec.heralded_b.clear();
      for (std::size_t c = 0; c < ta.channels.size(); ++c) {
        if (ta.channels[c].heralded()) rec.heralded_a.push_back(static_cast<int>(c + 1));
      }
      for (std::size_t c = 0; c < tb.channels.size(); ++c) {
        if (tb.channels[c].heralded()) rec.heralded_b.push_back(static_cast<int>(c + 1));
      }
    }
    for (int c = 0; c < modes; ++c) {
      const auto i = static_cast<std::size_t>(c);
      if (!ta.channels[i].heralded() || !tb.channels[i].heralded()) continue;
      ++rec.matched_pairs;
      if (rec.bsm_mode == 0 && rng_station.bernoulli(link.attempt_success_probability)) {
        rec.bsm_mode = c + 1;
      }
    }
    if (rec.bsm_mode != 0) {
      rec.survived = rng_station.bernoulli(survival);
      rec.success = rec.survived;
      if (rec.success) {
        rec.age_s = res.dt_s;
        ++res.successes;
      }
    }
    if (on_cycle) on_cycle(rec);
  }
  return res;
}

}  // namespace mqi
