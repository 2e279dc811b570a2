#pragma once

// Trial-level Monte Carlo of one multiplexed interface node: write pulse,
// per-channel Raman pair generation with MFI/MFS branching, Stokes heralding,
// storage, feed-forward read-out through the switch network and anti-Stokes
// detection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mqi/coincidence_table.hpp"
#include "mqi/errors.hpp"
#include "mqi/quantum_state.hpp"
#include "mqi/rng.hpp"

namespace mqi {

struct NodeConfig {
  int mode_count = 3;
  double excitation_probability = 0.01;  // chi, per channel per trial
  double stokes_efficiency = 0.3;        // eta_S
  double anti_stokes_efficiency = 0.3;   // eta_T
  double switch_efficiency = 0.8;        // eta_sw
  double mfs_probability = 0.5;          // fraction of pairs on the MFS branch
  std::vector<double> lifetimes_s{730e-6, 1170e-6, 730e-6};
  double gamma0 = 0.15;
  NoiseModel noise{};
  double storage_time_s = 1e-6;

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError(std::string(name) + " must lie in [0, 1], got " + std::to_string(p));
      }
    };
    if (mode_count < 1) throw DomainError("mode_count must be >= 1");
    prob(excitation_probability, "excitation probability");
    prob(stokes_efficiency, "Stokes detection efficiency");
    prob(anti_stokes_efficiency, "anti-Stokes detection efficiency");
    prob(switch_efficiency, "switch efficiency");
    prob(mfs_probability, "MFS branch probability");
    prob(gamma0, "gamma0");
    if (lifetimes_s.size() != static_cast<std::size_t>(mode_count)) {
      throw DomainError("lifetimes list has " + std::to_string(lifetimes_s.size()) +
                        " entries for " + std::to_string(mode_count) + " modes");
    }
    for (double tau : lifetimes_s) {
      if (!(tau > 0.0)) throw DomainError("channel lifetimes must be > 0");
    }
    if (!(storage_time_s >= 0.0)) throw DomainError("storage time must be >= 0");
    noise.validate();
  }

  // chi << 1 is assumed throughout.
  bool excitation_warning() const { return excitation_probability > 0.1; }

  // Probability that a given channel heralds in one trial.
  double herald_probability() const {
    return excitation_probability * (1.0 - mfs_probability) * stokes_efficiency;
  }

  // Probability that a heralded channel's spin wave is retrieved into the
  // common fiber after storage time t.
  double retrieval_probability(int channel, double t) const {
    return gamma0 * std::exp(-t / lifetimes_s.at(static_cast<std::size_t>(channel - 1))) *
           switch_efficiency;
  }
};

/// Returns an advisory when multi-pair emission (second order in chi, not
/// modelled) becomes relevant.
inline std::optional<std::string> double_excitation_note(const NodeConfig& cfg) {
  if (cfg.excitation_probability > 0.05) {
    return "excitation probability " + std::to_string(cfg.excitation_probability) +
           " > 0.05: multi-pair emission is not modelled; results are first order in chi";
  }
  return std::nullopt;
}

enum class Branch : std::uint8_t { None, MFI, MFS };
// Detector that fired: D_1 is the transmitted analyzer port, D_2 the reflected.
enum class Click : std::uint8_t { None, D1, D2 };

inline const char* to_string(Branch b) {
  switch (b) {
    case Branch::None: return "none";
    case Branch::MFI: return "MFI";
    case Branch::MFS: return "MFS";
  }
  return "?";
}
inline const char* to_string(Click c) {
  switch (c) {
    case Click::None: return "none";
    case Click::D1: return "D1";
    case Click::D2: return "D2";
  }
  return "?";
}

struct ChannelRecord {
  Branch branch = Branch::None;
  Click stokes = Click::None;

  bool pair_generated() const { return branch != Branch::None; }
  bool heralded() const { return stokes != Click::None; }
};

struct TrialRecord {
  std::uint64_t trial_id = 0;
  std::size_t setting_id = 0;
  double storage_time_s = 0.0;
  std::vector<ChannelRecord> channels;
  int selected_channel = 0;  // 1-based feed-forward choice; 0 when nothing heralded
  bool retrieved = false;
  Click anti_stokes = Click::None;

  bool any_herald() const { return selected_channel != 0; }
};

// Detector statistics for one (setting, storage time), precomputed from the
// noise model so the trial loop only draws uniforms.
struct PreparedSetting {
  double p_stokes_d1 = 0.5;                 // marginal at zero delay
  std::array<double, 2> p_anti_d1_given{};  // conditional at storage time t
  std::vector<double> retrieval;            // per channel

  static PreparedSetting make(const NodeConfig& cfg, const PolarizationSetting& setting,
                              double storage_time_s) {
    PreparedSetting p;
    const auto p0 = outcome_probabilities(cfg.noise.state_at(0.0), setting);
    p.p_stokes_d1 = p0[0][0] + p0[0][1];
    const auto pt = outcome_probabilities(cfg.noise.state_at(storage_time_s), setting);
    for (int s = 0; s < 2; ++s) {
      const double marg = pt[s][0] + pt[s][1];
      p.p_anti_d1_given[s] = marg > 0.0 ? pt[s][0] / marg : 0.5;
    }
    p.retrieval.resize(static_cast<std::size_t>(cfg.mode_count));
    for (int c = 1; c <= cfg.mode_count; ++c) {
      p.retrieval[static_cast<std::size_t>(c - 1)] = cfg.retrieval_probability(c, storage_time_s);
    }
    return p;
  }
};

// Core trial: all branching consumes `rng` only. `rec.channels` is reused.
inline void simulate_trial(const NodeConfig& cfg, const PreparedSetting& prep, RandomStream& rng,
                           TrialRecord& rec) {
  rec.channels.assign(static_cast<std::size_t>(cfg.mode_count), ChannelRecord{});
  rec.selected_channel = 0;
  rec.retrieved = false;
  rec.anti_stokes = Click::None;
  for (int c = 0; c < cfg.mode_count; ++c) {
    if (!rng.bernoulli(cfg.excitation_probability)) continue;
    auto& ch = rec.channels[static_cast<std::size_t>(c)];
    if (rng.bernoulli(cfg.mfs_probability)) {
      // Excluded from the collection optics: never reaches a Stokes detector.
      ch.branch = Branch::MFS;
      continue;
    }
    ch.branch = Branch::MFI;
    if (!rng.bernoulli(cfg.stokes_efficiency)) continue;
    ch.stokes = rng.bernoulli(prep.p_stokes_d1) ? Click::D1 : Click::D2;
    if (rec.selected_channel == 0) rec.selected_channel = c + 1;
  }
  if (rec.selected_channel == 0) return;
  const auto sel = static_cast<std::size_t>(rec.selected_channel - 1);
  if (!rng.bernoulli(prep.retrieval[sel])) return;
  rec.retrieved = true;
  if (!rng.bernoulli(cfg.anti_stokes_efficiency)) return;
  const int s = rec.channels[sel].stokes == Click::D1 ? 0 : 1;
  rec.anti_stokes = rng.bernoulli(prep.p_anti_d1_given[s]) ? Click::D1 : Click::D2;
}

/// One write/read trial. The random stream is the only source of randomness.
inline TrialRecord run_trial(const NodeConfig& cfg, const PolarizationSetting& setting,
                             RandomStream& rng, std::uint64_t trial_id = 0) {
  cfg.validate();
  TrialRecord rec;
  rec.trial_id = trial_id;
  rec.storage_time_s = cfg.storage_time_s;
  simulate_trial(cfg, PreparedSetting::make(cfg, setting, cfg.storage_time_s), rng, rec);
  return rec;
}

inline void accumulate(const TrialRecord& rec, DetectorCounts<std::uint64_t>* channel_counts) {
  for (std::size_t c = 0; c < rec.channels.size(); ++c) {
    const Click k = rec.channels[c].stokes;
    if (k == Click::D1) ++channel_counts[c].s1;
    if (k == Click::D2) ++channel_counts[c].s2;
  }
  if (rec.anti_stokes == Click::None) return;
  const auto sel = static_cast<std::size_t>(rec.selected_channel - 1);
  const int s = rec.channels[sel].stokes == Click::D1 ? 0 : 1;
  const int t = rec.anti_stokes == Click::D1 ? 0 : 1;
  ++channel_counts[sel].coincidence(s, t);
}

struct BatchOptions {
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  // Receives every trial in trial-id order. Forces single-threaded execution.
  std::function<void(const TrialRecord&)> on_trial;
};

/// Runs every schedule block and aggregates a CoincidenceTable. Trial ids are
/// global across the schedule; each trial's stream depends only on
/// (master_seed, trial_id), so the table is identical for any worker count.
inline CoincidenceTable run_batch(const NodeConfig& cfg, const std::vector<SettingBlock>& schedule,
                                  const BatchOptions& opts = {}) {
  cfg.validate();
  CoincidenceTable table(cfg.mode_count);
  for (const auto& block : schedule) {
    if (block.n_trials < 1) throw DomainError("each schedule block needs n_trials >= 1");
    table.add_setting(block);
  }
  const auto m = static_cast<std::size_t>(cfg.mode_count);
  std::uint64_t first_id = 0;
  for (std::size_t sid = 0; sid < schedule.size(); ++sid) {
    const auto& block = schedule[sid];
    const PreparedSetting prep = PreparedSetting::make(cfg, block.setting, block.storage_time_s);
    auto run_range = [&](std::uint64_t begin, std::uint64_t end,
                         std::vector<DetectorCounts<std::uint64_t>>& counts) {
      TrialRecord rec;
      rec.setting_id = sid;
      rec.storage_time_s = block.storage_time_s;
      for (std::uint64_t k = begin; k < end; ++k) {
        rec.trial_id = first_id + k;
        RandomStream rng(opts.master_seed, rec.trial_id);
        simulate_trial(cfg, prep, rng, rec);
        accumulate(rec, counts.data());
        if (opts.on_trial) opts.on_trial(rec);
      }
    };

    const unsigned workers =
        opts.on_trial ? 1u
                      : std::max(1u, static_cast<unsigned>(std::min<std::uint64_t>(
                                         opts.workers, block.n_trials)));
    std::vector<std::vector<DetectorCounts<std::uint64_t>>> partial(
        workers, std::vector<DetectorCounts<std::uint64_t>>(m));
    if (workers == 1) {
      run_range(0, block.n_trials, partial[0]);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (unsigned w = 0; w < workers; ++w) {
        const std::uint64_t begin = block.n_trials * w / workers;
        const std::uint64_t end = block.n_trials * (w + 1) / workers;
        pool.emplace_back([&, begin, end, w] { run_range(begin, end, partial[w]); });
      }
      for (auto& t : pool) t.join();
    }
    for (const auto& part : partial) {
      for (std::size_t c = 0; c < m; ++c) table.at(sid, static_cast<int>(c + 1)) += part[c];
    }
    first_id += block.n_trials;
  }
  return table;
}

/// Noiseless expected counts for the same schedule: the analytic mean of
/// run_batch. Channel i is read out when it heralds and no lower-index
/// channel did.
inline ExpectedCountTable expected_counts(const NodeConfig& cfg,
                                          const std::vector<SettingBlock>& schedule) {
  cfg.validate();
  ExpectedCountTable table(cfg.mode_count);
  const double h = cfg.herald_probability();
  for (const auto& block : schedule) {
    const std::size_t sid = table.add_setting(block);
    const double n = static_cast<double>(block.n_trials);
    const auto p0 = outcome_probabilities(cfg.noise.state_at(0.0), block.setting);
    const auto pt = outcome_probabilities(cfg.noise.state_at(block.storage_time_s), block.setting);
    const std::array<double, 2> ps{p0[0][0] + p0[0][1], p0[1][0] + p0[1][1]};
    for (int c = 1; c <= cfg.mode_count; ++c) {
      auto& counts = table.at(sid, c);
      counts.s1 = n * h * ps[0];
      counts.s2 = n * h * ps[1];
      const double read = n * h * std::pow(1.0 - h, c - 1) *
                          cfg.retrieval_probability(c, block.storage_time_s) *
                          cfg.anti_stokes_efficiency;
      for (int s = 0; s < 2; ++s) {
        const double marg = pt[s][0] + pt[s][1];
        for (int t = 0; t < 2; ++t) {
          const double cond = marg > 0.0 ? pt[s][t] / marg : 0.5;
          counts.coincidence(s, t) = read * ps[s] * cond;
        }
      }
    }
  }
  return table;
}

}  // namespace mqi
