#pragma once

// Experiment scenarios: a node configuration, a schedule of sweeps and the
// analysis that turns the resulting tables into figure data. Also the run
// manifest and the on-disk layout of a run directory.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mqi/analysis.hpp"
#include "mqi/config.hpp"
#include "mqi/decoherence.hpp"
#include "mqi/errors.hpp"
#include "mqi/io.hpp"
#include "mqi/link_simulator.hpp"
#include "mqi/node_simulator.hpp"
#include "mqi/tomography.hpp"

#ifndef MQI_VERSION
#define MQI_VERSION "0.1.0"
#endif

namespace mqi {

inline constexpr std::string_view kToolVersion = MQI_VERSION;

enum class AnalysisKind { None, RetrievalCurve, BellCurve, MultiplexGain, Tomography };

inline const char* to_string(AnalysisKind k) {
  switch (k) {
    case AnalysisKind::None: return "none";
    case AnalysisKind::RetrievalCurve: return "retrieval_curve";
    case AnalysisKind::BellCurve: return "bell_curve";
    case AnalysisKind::MultiplexGain: return "multiplex_gain";
    case AnalysisKind::Tomography: return "tomography";
  }
  return "?";
}

inline AnalysisKind parse_analysis_kind(const std::string& s) {
  for (auto k : {AnalysisKind::None, AnalysisKind::RetrievalCurve, AnalysisKind::BellCurve,
                 AnalysisKind::MultiplexGain, AnalysisKind::Tomography}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown analysis '" + s +
                    "' (expected none, retrieval_curve, bell_curve, multiplex_gain, tomography)");
}

struct Sweep {
  std::string label;
  NodeConfig node;
  std::vector<double> storage_times_s;
  std::vector<PolarizationSetting> settings;
  std::uint64_t n_trials = 0;  // per (setting, storage time)
  bool baseline = false;

  // Storage time outer, setting inner.
  std::vector<SettingBlock> schedule() const {
    std::vector<SettingBlock> out;
    for (double t : storage_times_s) {
      for (const auto& s : settings) out.push_back({s, t, n_trials});
    }
    return out;
  }
};

struct Scenario {
  std::string name;
  std::optional<std::uint64_t> master_seed;
  AnalysisKind analysis = AnalysisKind::None;
  NodeConfig node;
  GeometryConfig geometry;
  EnsembleConfig ensemble;
  std::optional<LinkConfig> link;
  std::uint64_t link_cycles = 100000;
  BootstrapOptions bootstrap;
  std::vector<Sweep> sweeps;

  std::uint64_t seed() const {
    if (!master_seed) {
      throw ConfigError("scenario '" + name + "' has no master_seed; set one or pass --seed");
    }
    return *master_seed;
  }
};

// ---------------------------------------------------------------------------
// Parsing

inline std::vector<PolarizationSetting> settings_preset(const std::string& name) {
  if (name == "retrieval") return {PolarizationSetting::angles(0.0, 0.0)};
  if (name == "chsh") {
    const ChshAngles a;
    return {PolarizationSetting::angles(a.theta_s, a.theta_t),
            PolarizationSetting::angles(a.theta_s, a.theta_t_prime),
            PolarizationSetting::angles(a.theta_s_prime, a.theta_t),
            PolarizationSetting::angles(a.theta_s_prime, a.theta_t_prime)};
  }
  if (name == "tomography") {
    std::vector<PolarizationSetting> out;
    for (BasisLabel x : kBasisLabels) {
      for (BasisLabel y : kBasisLabels) out.push_back(PolarizationSetting::basis(x, y));
    }
    return out;
  }
  throw ConfigError("unknown settings preset '" + name + "' (expected retrieval, chsh, tomography)");
}

inline Sweep sweep_from_json(const Json& j, const NodeConfig& base, std::size_t index) {
  Sweep s;
  s.label = "sweep" + std::to_string(index);
  s.node = base;
  SectionReader r(j, "sweeps[" + std::to_string(index) + "]");
  r.read("label", s.label);
  if (s.label.empty() || s.label.find_first_of("/\\ ") != std::string::npos) {
    throw ConfigError("sweep label '" + s.label + "' must be non-empty without spaces or slashes");
  }
  if (r.has("node")) s.node = node_config_from_json(r.raw("node"), base, "sweeps." + s.label + ".node");
  s.storage_times_s = {base.storage_time_s};
  r.read("storage_times_s", s.storage_times_s);
  if (s.storage_times_s.empty()) throw ConfigError("sweep '" + s.label + "' has no storage times");
  for (double t : s.storage_times_s) {
    if (!(t >= 0.0)) throw ConfigError("sweep '" + s.label + "': storage times must be >= 0");
  }
  if (!r.has("settings")) throw ConfigError("sweep '" + s.label + "' needs 'settings'");
  const Json& st = r.raw("settings");
  if (st.is_string()) {
    s.settings = settings_preset(st.get<std::string>());
  } else if (st.is_array()) {
    for (const auto& e : st) s.settings.push_back(setting_from_json(e));
  } else {
    throw ConfigError("sweep '" + s.label + "': settings must be a preset name or a list");
  }
  if (s.settings.empty()) throw ConfigError("sweep '" + s.label + "' has no settings");
  if (!r.has("n_trials")) throw ConfigError("sweep '" + s.label + "' needs 'n_trials'");
  r.read("n_trials", s.n_trials);
  if (s.n_trials < 1) throw ConfigError("sweep '" + s.label + "': n_trials must be >= 1");
  r.read("baseline", s.baseline);
  r.finish();
  return s;
}

inline Scenario scenario_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  Scenario sc;
  SectionReader r(j, "scenario");
  r.read("name", sc.name);
  if (r.has("master_seed")) {
    std::uint64_t seed = 0;
    r.read("master_seed", seed);
    sc.master_seed = seed;
  }
  if (r.has("analysis")) sc.analysis = parse_analysis_kind(r.raw("analysis").get<std::string>());
  if (r.has("node")) sc.node = node_config_from_json(r.raw("node"));
  if (r.has("geometry")) sc.geometry = geometry_config_from_json(r.raw("geometry"));
  if (r.has("ensemble")) sc.ensemble = ensemble_config_from_json(r.raw("ensemble"));
  if (r.has("link")) sc.link = link_config_from_json(r.raw("link"), {}, &sc.link_cycles);
  if (r.has("bootstrap")) {
    SectionReader b(r.raw("bootstrap"), "bootstrap");
    b.read("n_resamples", sc.bootstrap.n_resamples);
    b.read("seed", sc.bootstrap.seed);
    b.finish();
    if (sc.bootstrap.n_resamples < 100) throw ConfigError("bootstrap.n_resamples must be >= 100");
  }
  if (r.has("sweeps")) {
    const Json& sw = r.raw("sweeps");
    if (!sw.is_array()) throw ConfigError("'sweeps' must be a list");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < sw.size(); ++i) {
      sc.sweeps.push_back(sweep_from_json(sw[i], sc.node, i));
      if (!labels.insert(sc.sweeps.back().label).second) {
        throw ConfigError("duplicate sweep label '" + sc.sweeps.back().label + "'");
      }
    }
  }
  r.finish();
  if (sc.name.empty()) throw ConfigError("scenario needs a 'name'");
  if (sc.analysis != AnalysisKind::None && sc.sweeps.empty()) {
    throw ConfigError("analysis '" + std::string(to_string(sc.analysis)) + "' needs sweeps");
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  return scenario_from_json(load_json_file(path));
}

// Fully resolved form: every default filled in, presets expanded. This is
// what the scenario hash covers.
inline Json canonical_json(const Scenario& sc) {
  Json sweeps = Json::array();
  for (const auto& s : sc.sweeps) {
    Json settings = Json::array();
    for (const auto& p : s.settings) settings.push_back(to_json(p));
    sweeps.push_back({{"label", s.label},
                      {"node", to_json(s.node)},
                      {"storage_times_s", s.storage_times_s},
                      {"settings", settings},
                      {"n_trials", s.n_trials},
                      {"baseline", s.baseline}});
  }
  Json j = {{"name", sc.name},
            {"analysis", to_string(sc.analysis)},
            {"node", to_json(sc.node)},
            {"geometry", to_json(sc.geometry)},
            {"ensemble", to_json(sc.ensemble)},
            {"bootstrap", {{"n_resamples", sc.bootstrap.n_resamples}, {"seed", sc.bootstrap.seed}}},
            {"sweeps", sweeps}};
  j["master_seed"] = sc.master_seed ? Json(*sc.master_seed) : Json(nullptr);
  if (sc.link) {
    j["link"] = to_json(*sc.link);
    j["link"]["cycles"] = sc.link_cycles;
  }
  return j;
}

struct RunOptions {
  unsigned workers = 1;
  bool expected_counts = false;
};

/// Hash over the resolved scenario, the tool version and the count mode. The
/// worker count is excluded: results do not depend on it.
inline std::string scenario_hash(const Scenario& sc, const RunOptions& opts) {
  std::string text = canonical_json(sc).dump();
  text += "|";
  text += kToolVersion;
  text += opts.expected_counts ? "|expected" : "|sampled";
  return hex64(fnv1a64(text));
}

// ---------------------------------------------------------------------------
// Simulation

struct SweepTable {
  std::string label;
  NodeConfig node;
  bool baseline = false;
  ExpectedCountTable table;
};

// Sweep k draws from its own seed so adding a sweep leaves the others intact.
inline std::uint64_t sweep_seed(std::uint64_t master_seed, std::size_t index) {
  return derive_seed(master_seed, index, /*domain=*/0x5eedULL);
}

inline std::vector<SweepTable> run_simulation(
    const Scenario& sc, const RunOptions& opts,
    const std::function<void(const Sweep&, const TrialRecord&)>& on_trial = {}) {
  std::vector<SweepTable> out;
  for (std::size_t i = 0; i < sc.sweeps.size(); ++i) {
    const Sweep& s = sc.sweeps[i];
    SweepTable st{s.label, s.node, s.baseline, ExpectedCountTable(s.node.mode_count)};
    if (opts.expected_counts) {
      st.table = expected_counts(s.node, s.schedule());
    } else {
      BatchOptions b;
      b.master_seed = sweep_seed(sc.seed(), i);
      b.workers = opts.workers;
      if (on_trial) b.on_trial = [&](const TrialRecord& rec) { on_trial(s, rec); };
      st.table = to_expected(run_batch(s.node, s.schedule(), b));
    }
    out.push_back(std::move(st));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Analysis

struct PlotData {
  std::string name;  // file stem
  std::string x_label;
  std::string y_label;
  std::vector<std::array<double, 3>> rows;  // (x, y, sigma)
};

struct AnalysisReport {
  Json summary = Json::object();
  std::vector<PlotData> plots;
};

inline std::vector<std::string> planned_plot_names(AnalysisKind kind) {
  switch (kind) {
    case AnalysisKind::RetrievalCurve: return {"retrieval_vs_storage", "retrieval_matched_vs_storage"};
    case AnalysisKind::BellCurve: return {"chsh_vs_storage"};
    case AnalysisKind::MultiplexGain: return {"singles_vs_modes", "coincidences_vs_modes"};
    case AnalysisKind::Tomography: return {"fidelity_vs_channel"};
    case AnalysisKind::None: break;
  }
  return {};
}

inline std::vector<double> storage_times(const ExpectedCountTable& table) {
  std::vector<double> ts;
  for (const auto& b : table.blocks()) {
    if (std::none_of(ts.begin(), ts.end(), [&](double t) { return std::abs(t - b.storage_time_s) < 1e-12; })) {
      ts.push_back(b.storage_time_s);
    }
  }
  std::sort(ts.begin(), ts.end());
  return ts;
}

inline const SweepTable& primary_sweep(const std::vector<SweepTable>& tables) {
  for (const auto& t : tables) {
    if (!t.baseline) return t;
  }
  throw ConfigError("scenario has no non-baseline sweep to analyze");
}

// Switch-corrected retrieval efficiency at every storage time.
inline std::vector<DecaySample> retrieval_samples(const ExpectedCountTable& table,
                                                  const NodeConfig& node,
                                                  CoincidenceSelection which) {
  std::vector<DecaySample> out;
  for (double t : storage_times(table)) {
    const double g = retrieval_efficiency_value(table, node.anti_stokes_efficiency, Selection{{}, t},
                                                which) /
                     node.switch_efficiency;
    out.push_back({t, g});
  }
  return out;
}

struct DecayFit {
  EstimateWithError gamma0;
  EstimateWithError tau0_s;
};

inline DecayFit fit_retrieval_curve(const ExpectedCountTable& table, const NodeConfig& node,
                                    CoincidenceSelection which, const BootstrapOptions& boot) {
  auto fit_of = [&](const ExpectedCountTable& t) {
    try {
      return fit_exponential(retrieval_samples(t, node, which));
    } catch (const FitError& e) {
      throw EstimationError(e.what());
    } catch (const DomainError& e) {
      throw EstimationError(e.what());
    }
  };
  DecayFit f;
  const DecayCurve point = fit_of(table);
  f.gamma0.value = point.gamma0;
  f.tau0_s.value = point.tau0_s;
  f.gamma0.sigma =
      poisson_bootstrap(table, [&](const ExpectedCountTable& t) { return fit_of(t).gamma0; }, boot);
  f.tau0_s.sigma =
      poisson_bootstrap(table, [&](const ExpectedCountTable& t) { return fit_of(t).tau0_s; }, boot);
  return f;
}

inline AnalysisReport analyze_retrieval(const std::vector<SweepTable>& tables,
                                        const BootstrapOptions& boot) {
  const SweepTable& sw = primary_sweep(tables);
  const NodeConfig& node = sw.node;
  AnalysisReport rep;
  PlotData all{"retrieval_vs_storage", "storage_time_us", "gamma_corrected", {}};
  PlotData matched{"retrieval_matched_vs_storage", "storage_time_us", "gamma_matched_corrected", {}};
  Json points = Json::array();
  for (double t : storage_times(sw.table)) {
    const auto r = retrieval_efficiency_estimate(sw.table, node.anti_stokes_efficiency,
                                                 node.switch_efficiency, Selection{{}, t}, boot);
    const EstimateWithError m{r.matched_raw.value / node.switch_efficiency,
                              r.matched_raw.sigma / node.switch_efficiency};
    all.rows.push_back({t * 1e6, r.switch_corrected.value, r.switch_corrected.sigma});
    matched.rows.push_back({t * 1e6, m.value, m.sigma});
    points.push_back({{"storage_time_s", t},
                      {"raw", to_json(r.raw)},
                      {"switch_corrected", to_json(r.switch_corrected)},
                      {"matched_corrected", to_json(m)}});
  }
  const DecayFit fit = fit_retrieval_curve(sw.table, node, CoincidenceSelection::All, boot);
  const DecayFit fit_m = fit_retrieval_curve(sw.table, node, CoincidenceSelection::Matched, boot);
  rep.summary = {
      {"sweep", sw.label},
      {"points", points},
      {"fit", {{"gamma0", to_json(fit.gamma0)},
               {"tau0_us", {{"value", fit.tau0_s.value * 1e6}, {"sigma", fit.tau0_s.sigma * 1e6}}}}},
      {"fit_matched",
       {{"gamma0", to_json(fit_m.gamma0)},
        {"tau0_us", {{"value", fit_m.tau0_s.value * 1e6}, {"sigma", fit_m.tau0_s.sigma * 1e6}}}}},
      {"configured_lifetimes_us", s_to_us(node.lifetimes_s)},
      {"configured_mean_lifetime_us", mean_lifetime(node.lifetimes_s) * 1e6}};
  rep.plots = {all, matched};
  return rep;
}

inline AnalysisReport analyze_bell(const std::vector<SweepTable>& tables,
                                   const BootstrapOptions& boot) {
  const SweepTable& sw = primary_sweep(tables);
  AnalysisReport rep;
  PlotData plot{"chsh_vs_storage", "storage_time_us", "S", {}};
  Json points = Json::array();
  const ChshAngles a;
  for (double t : storage_times(sw.table)) {
    const Selection sel{{}, t};
    const auto s = chsh(sw.table, a, sel, boot);
    Json corr = Json::array();
    for (auto [ts, tt] : {std::pair{a.theta_s, a.theta_t}, std::pair{a.theta_s, a.theta_t_prime},
                          std::pair{a.theta_s_prime, a.theta_t},
                          std::pair{a.theta_s_prime, a.theta_t_prime}}) {
      const auto e = correlation(sw.table, ts, tt, sel, boot);
      corr.push_back({{"theta_S_deg", rad_to_deg(ts)}, {"theta_T_deg", rad_to_deg(tt)},
                      {"E", to_json(e)}});
    }
    double coinc = 0.0;
    for (std::size_t id : sw.table.find_angles(a.theta_s, a.theta_t, t)) {
      coinc += sw.table.total(id).coincidences();
    }
    plot.rows.push_back({t * 1e6, s.value, s.sigma});
    points.push_back({{"storage_time_s", t},
                      {"S", to_json(s)},
                      {"violation_sigmas", s.sigma > 0.0 ? (s.value - 2.0) / s.sigma : 0.0},
                      {"coincidences_first_setting", coinc},
                      {"correlations", corr}});
  }
  rep.summary = {{"sweep", sw.label}, {"points", points}};
  rep.plots = {plot};
  return rep;
}

inline AnalysisReport analyze_multiplex(const std::vector<SweepTable>& tables) {
  std::vector<MultiplexRun> runs;
  const SweepTable* baseline = nullptr;
  for (const auto& t : tables) {
    if (t.baseline) {
      baseline = &t;
    } else {
      runs.push_back({t.node.mode_count, t.node.switch_efficiency, t.table});
    }
  }
  AnalysisReport rep;
  PlotData singles{"singles_vs_modes", "modes", "P_S", {}};
  PlotData coinc{"coincidences_vs_modes", "modes", "P_ST", {}};
  Json points = Json::array();
  for (const auto& p : multiplex_gain(runs)) {
    singles.rows.push_back({static_cast<double>(p.modes), p.p_stokes.value, p.p_stokes.sigma});
    coinc.rows.push_back({static_cast<double>(p.modes), p.p_coincidence.value, p.p_coincidence.sigma});
    points.push_back({{"modes", p.modes},
                      {"p_stokes", to_json(p.p_stokes)},
                      {"p_coincidence", to_json(p.p_coincidence)},
                      {"singles_gain", to_json(p.singles_gain)},
                      {"coincidence_gain", to_json(p.coincidence_gain)},
                      {"osn_adjusted_gain", p.osn_adjusted_gain}});
  }
  rep.summary = {{"points", points}};
  if (baseline != nullptr) {
    const MultiplexRun base{baseline->node.mode_count, baseline->node.switch_efficiency,
                            baseline->table};
    Json vs = Json::array();
    for (const auto& r : runs) {
      vs.push_back({{"modes", r.modes},
                    {"coincidence_gain", to_json(coincidence_gain_vs_baseline(r, base))},
                    {"expected_m_eta_sw", r.modes * r.switch_efficiency}});
    }
    rep.summary["vs_baseline"] = {{"baseline_sweep", baseline->label}, {"gains", vs}};
  }
  rep.plots = {singles, coinc};
  return rep;
}

inline Json reconstruction_json(const ReconstructionResult& r) {
  return {{"pooled", r.pooled},
          {"channel", r.channel},
          {"fidelity", to_json(r.fidelity_vs_ideal)},
          {"rho", to_json(r.rho)},
          {"min_eigenvalue", r.rho.min_eigenvalue()}};
}

inline AnalysisReport analyze_tomography(const std::vector<SweepTable>& tables,
                                         const BootstrapOptions& boot) {
  const SweepTable& sw = primary_sweep(tables);
  AnalysisReport rep;
  PlotData plot{"fidelity_vs_channel", "channel", "fidelity", {}};
  const auto pooled = reconstruct(tomography_counts(sw.table), boot);
  plot.rows.push_back({0.0, pooled.fidelity_vs_ideal.value, pooled.fidelity_vs_ideal.sigma});
  Json channels = Json::array();
  std::vector<EstimateWithError> fs;
  for (int c = 1; c <= sw.table.channel_count(); ++c) {
    const auto r = reconstruct_channel(sw.table, c, boot);
    plot.rows.push_back({static_cast<double>(c), r.fidelity_vs_ideal.value, r.fidelity_vs_ideal.sigma});
    fs.push_back(r.fidelity_vs_ideal);
    channels.push_back(reconstruction_json(r));
  }
  double max_z = 0.0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    for (std::size_t k = i + 1; k < fs.size(); ++k) {
      const double s = std::hypot(fs[i].sigma, fs[k].sigma);
      if (s > 0.0) max_z = std::max(max_z, std::abs(fs[i].value - fs[k].value) / s);
    }
  }
  double mean = 0.0;
  for (const auto& f : fs) mean += f.value;
  mean /= static_cast<double>(fs.size());
  rep.summary = {{"sweep", sw.label},
                 {"pooled", reconstruction_json(pooled)},
                 {"channels", channels},
                 {"channel_mean_fidelity", mean},
                 {"channel_max_pairwise_z", max_z}};
  rep.plots = {plot};
  return rep;
}

inline AnalysisReport analyze_scenario(const Scenario& sc, const std::vector<SweepTable>& tables) {
  switch (sc.analysis) {
    case AnalysisKind::RetrievalCurve: return analyze_retrieval(tables, sc.bootstrap);
    case AnalysisKind::BellCurve: return analyze_bell(tables, sc.bootstrap);
    case AnalysisKind::MultiplexGain: return analyze_multiplex(tables);
    case AnalysisKind::Tomography: return analyze_tomography(tables, sc.bootstrap);
    case AnalysisKind::None: break;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Run directory layout

inline std::string coincidence_file(const std::string& label) { return label + ".coincidences.csv"; }
inline std::string sidecar_file(const std::string& label) { return label + ".settings.json"; }
inline std::string events_file(const std::string& label) { return label + ".events.jsonl"; }
inline std::string tomography_file(const std::string& label, int channel = 0) {
  return channel == 0 ? label + ".tomography.csv"
                      : label + ".tomography.ch" + std::to_string(channel) + ".csv";
}

inline bool has_basis_blocks(const std::vector<SettingBlock>& blocks) {
  return std::any_of(blocks.begin(), blocks.end(),
                     [](const SettingBlock& b) { return !b.setting.is_angles(); });
}

inline std::vector<std::string> sweep_files(const Sweep& s, bool event_log) {
  std::vector<std::string> f{sidecar_file(s.label), coincidence_file(s.label)};
  const auto blocks = s.schedule();
  if (has_basis_blocks(blocks)) {
    f.push_back(tomography_file(s.label));
    for (int c = 1; c <= s.node.mode_count; ++c) f.push_back(tomography_file(s.label, c));
  }
  if (event_log) f.push_back(events_file(s.label));
  return f;
}

inline Json manifest_json(const Scenario& sc, const RunOptions& opts, const std::string& hash,
                          const std::string& command, const std::vector<std::string>& files) {
  return {{"scenario_hash", hash},
          {"tool_version", kToolVersion},
          {"command", command},
          {"count_mode", opts.expected_counts ? "expected" : "sampled"},
          {"constants", constants_table()},
          {"timestamps", {{"started_utc", utc_timestamp()}}},
          {"files", files},
          {"scenario", canonical_json(sc)}};
}

inline std::string to_csv(const PlotData& p) {
  std::ostringstream os;
  os << p.x_label << ',' << p.y_label << ",sigma\n";
  for (const auto& r : p.rows) {
    os << format_number(r[0]) << ',' << format_number(r[1]) << ',' << format_number(r[2]) << '\n';
  }
  return os.str();
}

inline Json sidecar_json(const SweepTable& st, const std::string& hash) {
  Json blocks = Json::array();
  for (std::size_t i = 0; i < st.table.setting_count(); ++i) {
    Json b = to_json(st.table.block(i), i);
    // The tomography CSV carries coincidences only; keep the singles here.
    if (!st.table.block(i).setting.is_angles()) {
      Json singles = Json::array();
      for (int c = 1; c <= st.table.channel_count(); ++c) {
        singles.push_back({st.table.at(i, c).s1, st.table.at(i, c).s2});
      }
      b["singles"] = singles;
    }
    blocks.push_back(b);
  }
  return {{"scenario_hash", hash},
          {"label", st.label},
          {"baseline", st.baseline},
          {"channel_count", st.table.channel_count()},
          {"node", to_json(st.node)},
          {"blocks", blocks}};
}

inline void write_sweep_tables(const std::filesystem::path& dir, const SweepTable& st,
                               const std::string& hash) {
  write_text_file(dir / sidecar_file(st.label), sidecar_json(st, hash).dump(2) + "\n");
  {
    std::ostringstream os;
    write_coincidence_csv(os, st.table);
    write_text_file(dir / coincidence_file(st.label), os.str());
  }
  if (has_basis_blocks(st.table.blocks())) {
    std::ostringstream pooled;
    write_tomography_csv(pooled, tomography_counts(st.table));
    write_text_file(dir / tomography_file(st.label), pooled.str());
    for (int c = 1; c <= st.table.channel_count(); ++c) {
      std::ostringstream os;
      write_tomography_csv(os, tomography_counts(st.table, Selection{{c}, {}}));
      write_text_file(dir / tomography_file(st.label, c), os.str());
    }
  }
}

/// Rebuilds a sweep table from the files written by write_sweep_tables.
/// Basis blocks are refilled from the per-channel tomography files, so a
/// tomography sweep must use a single storage time to round-trip exactly.
inline SweepTable load_sweep_tables(const std::filesystem::path& dir, const Sweep& s,
                                    std::string* stored_hash = nullptr) {
  const Json side = load_json_file((dir / sidecar_file(s.label)).string());
  if (stored_hash != nullptr) *stored_hash = side.value("scenario_hash", std::string());
  std::vector<SettingBlock> blocks;
  for (const auto& b : side.at("blocks")) {
    blocks.push_back({setting_from_json({{"theta_S_deg", b.value("theta_S_deg", 0.0)},
                                         {"theta_T_deg", b.value("theta_T_deg", 0.0)}}),
                      b.at("storage_time_s").get<double>(), b.at("n_trials").get<std::uint64_t>()});
    if (b.contains("X")) {
      blocks.back().setting = setting_from_json({{"X", b.at("X")}, {"Y", b.at("Y")}});
    }
  }
  const int channels = side.at("channel_count").get<int>();
  SweepTable st{s.label, s.node, s.baseline, ExpectedCountTable(channels)};
  for (const auto& b : blocks) st.table.add_setting(b);

  const bool any_angles = std::any_of(blocks.begin(), blocks.end(),
                                      [](const SettingBlock& b) { return b.setting.is_angles(); });
  if (any_angles) {
    const auto csv = read_coincidence_csv((dir / coincidence_file(s.label)).string(), &blocks);
    if (csv.channel_count() > channels || csv.setting_count() > blocks.size()) {
      throw ConfigError(coincidence_file(s.label) + " does not match its settings sidecar");
    }
    for (std::size_t id = 0; id < csv.setting_count(); ++id) {
      if (!blocks[id].setting.is_angles()) continue;
      if (!(csv.block(id).setting == blocks[id].setting)) {
        throw ConfigError(coincidence_file(s.label) + ": setting_id " + std::to_string(id) +
                          " angles differ from the sidecar");
      }
      for (int c = 1; c <= csv.channel_count(); ++c) st.table.at(id, c) = csv.at(id, c);
    }
  }
  if (has_basis_blocks(blocks)) {
    for (int c = 1; c <= channels; ++c) {
      const auto counts = read_tomography_csv((dir / tomography_file(s.label, c)).string());
      for (BasisLabel x : kBasisLabels) {
        for (BasisLabel y : kBasisLabels) {
          const auto ids = st.table.find_basis(x, y);
          if (ids.empty()) continue;
          auto& d = st.table.at(ids.front(), c);
          const auto& g = counts(x, y);
          d.s1t1 = g[0];
          d.s1t2 = g[1];
          d.s2t1 = g[2];
          d.s2t2 = g[3];
        }
      }
    }
    const Json& jb = side.at("blocks");
    for (std::size_t id = 0; id < blocks.size(); ++id) {
      if (blocks[id].setting.is_angles() || !jb[id].contains("singles")) continue;
      const Json& singles = jb[id].at("singles");
      for (int c = 1; c <= channels && c <= static_cast<int>(singles.size()); ++c) {
        st.table.at(id, c).s1 = singles[static_cast<std::size_t>(c - 1)].at(0).get<double>();
        st.table.at(id, c).s2 = singles[static_cast<std::size_t>(c - 1)].at(1).get<double>();
      }
    }
  }
  return st;
}

inline void write_report(const std::filesystem::path& dir, const AnalysisReport& rep,
                         const Scenario& sc, const std::string& hash) {
  Json j = rep.summary;
  j["scenario_hash"] = hash;
  j["scenario"] = sc.name;
  j["analysis"] = to_string(sc.analysis);
  Json plots = Json::array();
  for (const auto& p : rep.plots) {
    plots.push_back(p.name + ".csv");
    write_text_file(dir / (p.name + ".csv"), to_csv(p));
  }
  j["plot_files"] = plots;
  write_text_file(dir / "report.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Geometry and lifetime reports

inline Json geometry_report(const GeometryConfig& g) {
  const ArrayGeometry& a = g.array;
  Json modes = Json::array();
  for (int c = 1; c <= a.channel_count; ++c) {
    const double theta = mode_angle(c, a);
    const auto arms = arm_angles(c, a);
    Json m = {{"channel", c},
              {"angle_rad", theta},
              {"angle_deg", rad_to_deg(theta)},
              {"arm_angles_deg", {rad_to_deg(arms[0]), rad_to_deg(arms[1])}}};
    m["spin_wavelength_m"] = theta > 0.0 ? Json(spin_wavelength(theta, a.write_wavelength_m))
                                         : Json("unbounded");
    modes.push_back(m);
  }
  auto mat = [](const RayMatrix& r) { return Json{{r.a, r.b}, {r.c, r.d}}; };
  const auto spot = array_spot_check(a, g.focused_spot_m, 5e-3, g.atomic_size_m);
  Json j = {{"array_rows", a.grid_rows()},
            {"array_cols", a.grid_cols()},
            {"modes", modes},
            {"btd",
             {{"focal_m", g.btd_focal_m},
              {"factor", g.shrink_factor},
              {"shrink", mat(btd_matrix(g.btd_focal_m, g.shrink_factor, BtdDirection::Shrink))},
              {"expand", mat(btd_matrix(g.btd_focal_m, g.shrink_factor, BtdDirection::Expand))}}},
            {"spot",
             {{"spot_at_center_m", spot.spot_at_center_m},
              {"envelope_m", spot.envelope_m},
              {"atomic_size_m", spot.atomic_size_m},
              {"exceeds_atomic_size", spot.exceeds_atomic_size}}}};
  if (a.small_angle_warning()) {
    j["warning"] = "beam separation exceeds 10% of the focal length; small-angle results are approximate";
  }
  return j;
}

inline Json lifetime_to_json(double s) {
  return is_unbounded(s) ? Json("unbounded") : Json(s * 1e6);
}

inline Json lifetimes_report(const GeometryConfig& g, const EnsembleConfig& e) {
  const double v = mean_thermal_speed(e.atoms);
  const double grad = gradient_lifetime(e.atoms, e.coherence);
  Json channels = Json::array();
  for (int c = 1; c <= g.array.channel_count; ++c) {
    const double theta = mode_angle(c, g.array);
    const double mot = theta > 0.0 && v > 0.0 ? motional_lifetime(theta, g.array.write_wavelength_m, v)
                                              : kUnbounded;
    const double comb = combined_lifetime(mot, grad);
    Json ch = {{"channel", c},
               {"angle_deg", rad_to_deg(theta)},
               {"motional_us", lifetime_to_json(mot)},
               {"gradient_us", lifetime_to_json(grad)},
               {"combined_us", lifetime_to_json(comb)}};
    if (static_cast<std::size_t>(c) <= e.fitted_lifetimes_s.size()) {
      const double fitted = e.fitted_lifetimes_s[static_cast<std::size_t>(c - 1)];
      ch["fitted_us"] = fitted * 1e6;
      if (!is_unbounded(comb)) {
        const double dev = (comb - fitted) / fitted;
        ch["model_vs_fitted"] = dev;
        // Model ignores loss channels the fit absorbs; flag large gaps only.
        if (std::abs(dev) > 0.25) ch["flag"] = "model and fitted lifetimes differ by more than 25%";
      }
    }
    channels.push_back(ch);
  }
  return {{"mean_thermal_speed_m_per_s", v},
          {"gradient_lifetime_us", lifetime_to_json(grad)},
          {"coherence", {{"m_a", e.coherence.m_a}, {"m_b", e.coherence.m_b}}},
          {"channels", channels},
          {"fitted_mean_us", e.fitted_lifetimes_s.empty()
                                 ? Json(nullptr)
                                 : Json(mean_lifetime(e.fitted_lifetimes_s) * 1e6)}};
}

inline Json link_report(const LinkResult& r) {
  return {{"L0_m", r.separation_m},
          {"dt_s", r.dt_s},
          {"feasible", r.feasibility.feasible},
          {"margin", r.feasibility.margin},
          {"cycles", r.cycles},
          {"successes", r.successes},
          {"p_success", r.p_success()},
          {"p_success_sigma", r.p_success_sigma()},
          {"rate_hz_wallclock", r.rate_hz_wallclock()},
          {"herald_cycles_a", r.herald_cycles_a},
          {"herald_cycles_b", r.herald_cycles_b}};
}

inline Json to_json(const CycleRecord& c) {
  return {{"schema", kCycleLogSchema},  {"cycle", c.cycle},         {"heralded_a", c.heralded_a},
          {"heralded_b", c.heralded_b}, {"matched_pairs", c.matched_pairs},
          {"bsm_mode", c.bsm_mode},     {"survived", c.survived},   {"success", c.success},
          {"age_s", c.age_s}};
}

}  // namespace mqi
