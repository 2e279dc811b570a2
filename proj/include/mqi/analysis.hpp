#pragma once

// Estimators over coincidence tables: correlation function, CHSH parameter,
// retrieval efficiency, multiplexing gain and Poissonian bootstrap errors.
//
// Every point estimator is a template over the count type so the same code
// runs on sampled (integer) tables and on noiseless expected-count tables.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mqi/coincidence_table.hpp"
#include "mqi/errors.hpp"
#include "mqi/rng.hpp"

namespace mqi {

struct EstimateWithError {
  double value = 0.0;
  double sigma = 0.0;
};

// Which part of a table an estimator looks at.
struct Selection {
  std::vector<int> channels;              // empty = all channels
  std::optional<double> storage_time_s;   // empty = every block
};

struct ChshAngles {
  double theta_s = 0.0;
  double theta_s_prime = std::numbers::pi / 4.0;
  double theta_t = std::numbers::pi / 8.0;
  double theta_t_prime = 3.0 * std::numbers::pi / 8.0;
};

struct BootstrapOptions {
  int n_resamples = 1000;
  std::uint64_t seed = 12345;
};

// Which detector pairs count as a detected retrieval.
enum class CoincidenceSelection {
  All,      // every Stokes/anti-Stokes coincidence
  Matched,  // D_S1 D_T1 + D_S2 D_T2 only
};

// ---------------------------------------------------------------------------
// Point estimators

template <class Count>
DetectorCounts<double> pooled_angles(const BasicCoincidenceTable<Count>& table, double theta_s,
                                     double theta_t, const Selection& sel) {
  const auto ids = table.find_angles(theta_s, theta_t, sel.storage_time_s);
  if (ids.empty()) {
    throw EstimationError("no data for analyzer setting (" +
                          std::to_string(theta_s * 180.0 / std::numbers::pi) + " deg, " +
                          std::to_string(theta_t * 180.0 / std::numbers::pi) + " deg)");
  }
  DetectorCounts<double> sum;
  for (auto id : ids) {
    const auto c = table.total(id, sel.channels);
    sum += DetectorCounts<double>{static_cast<double>(c.s1t1), static_cast<double>(c.s1t2),
                                  static_cast<double>(c.s2t1), static_cast<double>(c.s2t2),
                                  static_cast<double>(c.s1), static_cast<double>(c.s2)};
  }
  return sum;
}

template <class Count>
double correlation_value(const BasicCoincidenceTable<Count>& table, double theta_s,
                         double theta_t, const Selection& sel = {}) {
  const auto c = pooled_angles(table, theta_s, theta_t, sel);
  const double den = c.coincidences();
  if (!(den > 0.0)) throw EstimationError("correlation: no coincidences at this setting");
  return (c.matched() - c.crossed()) / den;
}

template <class Count>
double chsh_value(const BasicCoincidenceTable<Count>& table, const ChshAngles& a = {},
                  const Selection& sel = {}) {
  const double e1 = correlation_value(table, a.theta_s, a.theta_t, sel);
  const double e2 = correlation_value(table, a.theta_s, a.theta_t_prime, sel);
  const double e3 = correlation_value(table, a.theta_s_prime, a.theta_t, sel);
  const double e4 = correlation_value(table, a.theta_s_prime, a.theta_t_prime, sel);
  return std::abs(e1 - e2 + e3 + e4);
}

// sum(coincidences) / (eta_T * sum(singles)) at theta_S = theta_T = 0.
template <class Count>
double retrieval_efficiency_value(const BasicCoincidenceTable<Count>& table,
                                  double anti_stokes_efficiency, const Selection& sel = {},
                                  CoincidenceSelection which = CoincidenceSelection::All) {
  if (!(anti_stokes_efficiency > 0.0 && anti_stokes_efficiency <= 1.0)) {
    throw DomainError("anti-Stokes efficiency must lie in (0, 1]");
  }
  const auto c = pooled_angles(table, 0.0, 0.0, sel);
  const double singles = c.singles();
  if (!(singles > 0.0)) throw EstimationError("retrieval efficiency: no Stokes singles");
  const double coinc = which == CoincidenceSelection::All ? c.coincidences() : c.matched();
  return coinc / (anti_stokes_efficiency * singles);
}

// ---------------------------------------------------------------------------
// Bootstrap

using TableEstimator = std::function<double(const ExpectedCountTable&)>;

inline double sample_poisson(double mean, RandomStream& rng) {
  if (!(mean > 0.0)) return 0.0;
  std::poisson_distribution<std::int64_t> dist(mean);
  return static_cast<double>(dist(rng));
}

/// Resamples every count as Poisson(count), re-evaluates the estimator and
/// returns the sample standard deviation. Resamples on which the estimator
/// fails are dropped; more than 10% dropped is an error.
template <class Count>
double poisson_bootstrap(const BasicCoincidenceTable<Count>& table,
                         const TableEstimator& estimator, const BootstrapOptions& opts = {}) {
  if (opts.n_resamples < 100) throw DomainError("poisson_bootstrap needs n_resamples >= 100");
  const ExpectedCountTable base = to_expected(table);
  // The estimator must be defined on the observed table itself.
  (void)estimator(base);

  double sum = 0.0;
  double sum_sq = 0.0;
  int kept = 0;
  int dropped = 0;
  for (int r = 0; r < opts.n_resamples; ++r) {
    RandomStream rng(opts.seed, static_cast<std::uint64_t>(r), /*domain=*/0xb007);
    const ExpectedCountTable resampled =
        base.transform_counts([&](double c) { return sample_poisson(c, rng); });
    try {
      const double v = estimator(resampled);
      sum += v;
      sum_sq += v * v;
      ++kept;
    } catch (const EstimationError&) {
      ++dropped;
    }
  }
  if (dropped * 10 > opts.n_resamples) {
    throw EstimationError("poisson_bootstrap: estimator failed on " + std::to_string(dropped) +
                          " of " + std::to_string(opts.n_resamples) + " resamples");
  }
  if (kept < 2) throw EstimationError("poisson_bootstrap: too few usable resamples");
  const double mean = sum / kept;
  const double var = (sum_sq - kept * mean * mean) / (kept - 1);
  return std::sqrt(std::max(0.0, var));
}

// ---------------------------------------------------------------------------
// Estimates with bootstrap errors

template <class Count>
EstimateWithError correlation(const BasicCoincidenceTable<Count>& table, double theta_s,
                              double theta_t, const Selection& sel = {},
                              const BootstrapOptions& boot = {}) {
  const double v = correlation_value(table, theta_s, theta_t, sel);
  const double sigma = poisson_bootstrap(
      table,
      [&](const ExpectedCountTable& t) { return correlation_value(t, theta_s, theta_t, sel); },
      boot);
  return {v, sigma};
}

// The whole table is resampled jointly and S recomputed per resample.
template <class Count>
EstimateWithError chsh(const BasicCoincidenceTable<Count>& table, const ChshAngles& angles = {},
                       const Selection& sel = {}, const BootstrapOptions& boot = {}) {
  const double v = chsh_value(table, angles, sel);
  const double sigma = poisson_bootstrap(
      table, [&](const ExpectedCountTable& t) { return chsh_value(t, angles, sel); }, boot);
  return {v, sigma};
}

struct RetrievalEstimate {
  EstimateWithError raw;                // as measured, switch loss included
  EstimateWithError switch_corrected;   // raw / eta_sw
  EstimateWithError matched_raw;        // matched detector pairs only
};

template <class Count>
RetrievalEstimate retrieval_efficiency_estimate(const BasicCoincidenceTable<Count>& table,
                                                double anti_stokes_efficiency,
                                                double switch_efficiency,
                                                const Selection& sel = {},
                                                const BootstrapOptions& boot = {}) {
  if (!(switch_efficiency > 0.0 && switch_efficiency <= 1.0)) {
    throw DomainError("switch efficiency must lie in (0, 1]");
  }
  auto estimate = [&](CoincidenceSelection which) {
    const double v = retrieval_efficiency_value(table, anti_stokes_efficiency, sel, which);
    const double sigma = poisson_bootstrap(
        table,
        [&](const ExpectedCountTable& t) {
          return retrieval_efficiency_value(t, anti_stokes_efficiency, sel, which);
        },
        boot);
    return EstimateWithError{v, sigma};
  };
  RetrievalEstimate r;
  r.raw = estimate(CoincidenceSelection::All);
  r.switch_corrected = {r.raw.value / switch_efficiency, r.raw.sigma / switch_efficiency};
  r.matched_raw = estimate(CoincidenceSelection::Matched);
  return r;
}

// ---------------------------------------------------------------------------
// Multiplexing gain

struct MultiplexRun {
  int modes = 1;
  double switch_efficiency = 1.0;
  ExpectedCountTable table;
};

struct MultiplexPoint {
  int modes = 1;
  EstimateWithError p_stokes;       // total Stokes detection probability per trial
  EstimateWithError p_coincidence;  // total matched coincidence probability per trial
  EstimateWithError singles_gain;   // relative to the m = 1 run
  EstimateWithError coincidence_gain;
  double osn_adjusted_gain = 1.0;   // m * eta_sw
};

struct ProbabilityTotals {
  double trials = 0.0;
  double singles = 0.0;
  double matched = 0.0;
};

inline ProbabilityTotals probability_totals(const ExpectedCountTable& table) {
  ProbabilityTotals t;
  for (std::size_t id = 0; id < table.setting_count(); ++id) {
    const auto c = table.total(id);
    t.trials += static_cast<double>(table.block(id).n_trials);
    t.singles += c.singles();
    t.matched += c.matched();
  }
  if (!(t.trials > 0.0)) throw EstimationError("multiplex gain: table has no trials");
  return t;
}

// Ratio a/b of two independent Poisson totals with relative errors added in
// quadrature.
inline EstimateWithError count_ratio(double num, double num_trials, double den, double den_trials) {
  if (!(den > 0.0)) throw EstimationError("gain ratio: reference run has no counts");
  const double v = (num / num_trials) / (den / den_trials);
  const double rel = std::sqrt((num > 0.0 ? 1.0 / num : 0.0) + 1.0 / den);
  return {v, v * rel};
}

/// Per-m totals P_S^(m), P_ST^(m) and their gains relative to the m = 1 run.
inline std::vector<MultiplexPoint> multiplex_gain(const std::vector<MultiplexRun>& runs) {
  if (runs.empty()) return {};
  std::vector<ProbabilityTotals> totals;
  for (const auto& r : runs) totals.push_back(probability_totals(r.table));
  for (const auto& t : totals) {
    if (t.trials != totals.front().trials) {
      throw EstimationError("multiplex gain: runs must share the same trial count");
    }
  }
  const MultiplexRun* ref = nullptr;
  const ProbabilityTotals* ref_tot = nullptr;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].modes == 1) {
      ref = &runs[i];
      ref_tot = &totals[i];
      break;
    }
  }
  std::vector<MultiplexPoint> out;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& t = totals[i];
    MultiplexPoint p;
    p.modes = runs[i].modes;
    p.p_stokes = {t.singles / t.trials, std::sqrt(t.singles) / t.trials};
    p.p_coincidence = {t.matched / t.trials, std::sqrt(t.matched) / t.trials};
    if (ref != nullptr) {
      p.singles_gain = count_ratio(t.singles, t.trials, ref_tot->singles, ref_tot->trials);
      p.coincidence_gain = count_ratio(t.matched, t.trials, ref_tot->matched, ref_tot->trials);
    }
    p.osn_adjusted_gain = runs[i].modes * runs[i].switch_efficiency;
    out.push_back(p);
  }
  return out;
}

/// Coincidence gain of a multiplexed run with switch network over a
/// single-mode run without one.
inline EstimateWithError coincidence_gain_vs_baseline(const MultiplexRun& run,
                                                      const MultiplexRun& baseline) {
  const auto a = probability_totals(run.table);
  const auto b = probability_totals(baseline.table);
  return count_ratio(a.matched, a.trials, b.matched, b.trials);
}

}  // namespace mqi
