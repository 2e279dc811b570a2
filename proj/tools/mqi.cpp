// mqi: command-line front end for the multiplexed quantum-interface toolkit.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mqi/scenario.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  bool expected_counts = false;
};

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitOther = 1;

mqi::Scenario load_config(const GlobalOptions& g, bool required) {
  mqi::Scenario sc;
  if (!g.config.empty()) {
    sc = mqi::load_scenario(g.config);
  } else if (required) {
    throw mqi::ConfigError("this command needs --config PATH");
  } else {
    sc.name = "defaults";
  }
  if (g.seed) sc.master_seed = *g.seed;
  return sc;
}

mqi::RunOptions run_options(const GlobalOptions& g) { return {g.workers, g.expected_counts}; }

fs::path prepare_out(const GlobalOptions& g) {
  if (g.out.empty()) return {};
  std::error_code ec;
  fs::create_directories(g.out, ec);
  if (ec) throw mqi::ConfigError("cannot create output directory '" + g.out + "': " + ec.message());
  return fs::path(g.out);
}

void emit(const GlobalOptions& g, const std::string& file, const mqi::Json& j) {
  if (!g.out.empty()) mqi::write_text_file(prepare_out(g) / file, j.dump(2) + "\n");
}

std::string fmt(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string lifetime_cell(const mqi::Json& j) {
  return j.is_string() ? j.get<std::string>() : fmt(j.get<double>(), 1);
}

// ---------------------------------------------------------------------------

int cmd_geometry(const GlobalOptions& g) {
  const auto sc = load_config(g, false);
  const auto rep = mqi::geometry_report(sc.geometry);
  std::cout << "array " << rep["array_rows"] << " x " << rep["array_cols"] << " beams, "
            << sc.geometry.array.channel_count << " modes\n";
  std::cout << "mode  angle_deg  spin_wavelength_um\n";
  for (const auto& m : rep["modes"]) {
    const auto& sw = m["spin_wavelength_m"];
    std::cout << std::setw(4) << m["channel"].get<int>() << "  " << std::setw(9)
              << fmt(m["angle_deg"].get<double>(), 4) << "  "
              << (sw.is_string() ? sw.get<std::string>() : fmt(sw.get<double>() * 1e6, 1)) << "\n";
  }
  for (const char* dir : {"shrink", "expand"}) {
    const auto& m = rep["btd"][dir];
    std::cout << "BTD " << dir << " (f_L = " << sc.geometry.btd_focal_m
              << " m, F = " << sc.geometry.shrink_factor << "): [[" << m[0][0] << ", " << m[0][1]
              << "], [" << m[1][0] << ", " << m[1][1] << "]]\n";
  }
  const auto& spot = rep["spot"];
  std::cout << "spot envelope " << fmt(spot["envelope_m"].get<double>() * 1e3, 3) << " mm vs atomic size "
            << fmt(spot["atomic_size_m"].get<double>() * 1e3, 3) << " mm"
            << (spot["exceeds_atomic_size"].get<bool>() ? "  (EXCEEDS)" : "") << "\n";
  if (rep.contains("warning")) std::cerr << "warning: " << rep["warning"].get<std::string>() << "\n";
  emit(g, "geometry.json", rep);
  return kExitOk;
}

int cmd_lifetimes(const GlobalOptions& g) {
  const auto sc = load_config(g, false);
  const auto rep = mqi::lifetimes_report(sc.geometry, sc.ensemble);
  std::cout << "mean thermal speed " << fmt(rep["mean_thermal_speed_m_per_s"].get<double>(), 5)
            << " m/s; gradient lifetime " << lifetime_cell(rep["gradient_lifetime_us"]) << " us\n";
  std::cout << "mode  motional_us  gradient_us  combined_us  fitted_us\n";
  for (const auto& c : rep["channels"]) {
    std::cout << std::setw(4) << c["channel"].get<int>() << "  " << std::setw(11)
              << lifetime_cell(c["motional_us"]) << "  " << std::setw(11)
              << lifetime_cell(c["gradient_us"]) << "  " << std::setw(11)
              << lifetime_cell(c["combined_us"]) << "  " << std::setw(9)
              << (c.contains("fitted_us") ? fmt(c["fitted_us"].get<double>(), 1) : "-");
    if (c.contains("flag")) std::cout << "  [" << c["flag"].get<std::string>() << "]";
    std::cout << "\n";
  }
  emit(g, "lifetimes.json", rep);
  return kExitOk;
}

void print_report(const mqi::Scenario& sc, const mqi::AnalysisReport& rep) {
  std::cout << "analysis " << mqi::to_string(sc.analysis) << "\n";
  for (const auto& p : rep.plots) {
    std::cout << "  " << p.name << " (" << p.x_label << ", " << p.y_label << ", sigma)\n";
    for (const auto& r : p.rows) {
      std::cout << "    " << r[0] << "  " << r[1] << "  +/- " << r[2] << "\n";
    }
  }
  const auto& s = rep.summary;
  if (s.contains("fit")) {
    std::cout << "  fit: gamma0 = " << s["fit"]["gamma0"]["value"] << " +/- "
              << s["fit"]["gamma0"]["sigma"] << ", tau0 = " << s["fit"]["tau0_us"]["value"]
              << " +/- " << s["fit"]["tau0_us"]["sigma"] << " us\n";
  }
  if (s.contains("vs_baseline")) {
    for (const auto& v : s["vs_baseline"]["gains"]) {
      std::cout << "  m = " << v["modes"] << ": coincidence gain vs baseline "
                << v["coincidence_gain"]["value"] << " +/- " << v["coincidence_gain"]["sigma"] << "\n";
    }
  }
}

int cmd_simulate(const GlobalOptions& g, bool event_log, bool analyze) {
  const auto sc = load_config(g, true);
  if (sc.sweeps.empty()) throw mqi::ConfigError("scenario '" + sc.name + "' has no sweeps");
  (void)sc.seed();
  const auto opts = run_options(g);
  if (event_log && opts.expected_counts) {
    throw mqi::ConfigError("--event-log needs sampled trials; drop --expected-counts");
  }
  if (g.out.empty()) throw mqi::ConfigError("simulate needs --out DIR");
  const fs::path dir = prepare_out(g);
  const std::string hash = mqi::scenario_hash(sc, opts);

  std::vector<std::string> files{"manifest.json"};
  for (const auto& s : sc.sweeps) {
    for (auto& f : mqi::sweep_files(s, event_log)) files.push_back(f);
  }
  if (analyze && sc.analysis != mqi::AnalysisKind::None) {
    files.push_back("report.json");
    for (const auto& n : mqi::planned_plot_names(sc.analysis)) files.push_back(n + ".csv");
  }
  mqi::write_text_file(dir / "manifest.json",
                       mqi::manifest_json(sc, opts, hash, "simulate", files).dump(2) + "\n");

  for (const auto& s : sc.sweeps) {
    if (auto note = mqi::double_excitation_note(s.node)) std::cerr << "note: " << *note << "\n";
    if (s.node.excitation_warning()) {
      std::cerr << "warning: sweep " << s.label << " uses a large excitation probability\n";
    }
  }

  std::map<std::string, std::ofstream> logs;
  std::function<void(const mqi::Sweep&, const mqi::TrialRecord&)> on_trial;
  if (event_log) {
    for (const auto& s : sc.sweeps) logs[s.label].open(dir / mqi::events_file(s.label));
    on_trial = [&](const mqi::Sweep& s, const mqi::TrialRecord& rec) {
      logs[s.label] << mqi::to_json(rec).dump() << '\n';
    };
  }
  const auto tables = mqi::run_simulation(sc, opts, on_trial);
  for (const auto& t : tables) {
    mqi::write_sweep_tables(dir, t, hash);
    const auto tot = [&] {
      mqi::DetectorCounts<double> sum;
      for (std::size_t i = 0; i < t.table.setting_count(); ++i) sum += t.table.total(i);
      return sum;
    }();
    std::cout << "sweep " << t.label << ": " << t.table.setting_count() << " blocks, singles "
              << tot.singles() << ", coincidences " << tot.coincidences() << "\n";
  }
  if (analyze && sc.analysis != mqi::AnalysisKind::None) {
    const auto rep = mqi::analyze_scenario(sc, tables);
    mqi::write_report(dir, rep, sc, hash);
    print_report(sc, rep);
  }
  std::cout << "scenario hash " << hash << "; results in " << dir.string() << "\n";
  return kExitOk;
}

int analyze_table_file(const GlobalOptions& g, const std::string& table_path,
                       const std::string& estimator, double theta_s_deg, double theta_t_deg) {
  const auto sc = load_config(g, false);
  const auto table = mqi::read_coincidence_csv(table_path);
  mqi::Json rep = {{"table", table_path}, {"estimator", estimator}};
  if (estimator == "chsh") {
    const auto s = mqi::chsh(table, {}, {}, sc.bootstrap);
    rep["S"] = mqi::to_json(s);
    std::cout << "S = " << s.value << " +/- " << s.sigma << "\n";
  } else if (estimator == "correlation") {
    const auto e = mqi::correlation(table, mqi::deg_to_rad(theta_s_deg), mqi::deg_to_rad(theta_t_deg),
                                    {}, sc.bootstrap);
    rep["E"] = mqi::to_json(e);
    std::cout << "E = " << e.value << " +/- " << e.sigma << "\n";
  } else if (estimator == "retrieval") {
    const auto r = mqi::retrieval_efficiency_estimate(table, sc.node.anti_stokes_efficiency,
                                                      sc.node.switch_efficiency, {}, sc.bootstrap);
    rep["raw"] = mqi::to_json(r.raw);
    rep["switch_corrected"] = mqi::to_json(r.switch_corrected);
    rep["matched_raw"] = mqi::to_json(r.matched_raw);
    std::cout << "gamma = " << r.switch_corrected.value << " +/- " << r.switch_corrected.sigma
              << " (switch corrected)\n";
  } else {
    throw mqi::ConfigError("unknown estimator '" + estimator + "' (chsh, correlation, retrieval)");
  }
  emit(g, "analysis.json", rep);
  return kExitOk;
}

int cmd_analyze(const GlobalOptions& g, const std::string& counts_dir, const std::string& table,
                const std::string& estimator, double ts, double tt) {
  if (!table.empty()) return analyze_table_file(g, table, estimator, ts, tt);
  const auto sc = load_config(g, true);
  if (sc.analysis == mqi::AnalysisKind::None) {
    throw mqi::ConfigError("scenario '" + sc.name + "' does not name an analysis");
  }
  const auto opts = run_options(g);
  std::vector<mqi::SweepTable> tables;
  std::string hash;
  if (!counts_dir.empty()) {
    // Stored tables carry the hash of the run that produced them.
    for (const auto& s : sc.sweeps) {
      std::string stored;
      tables.push_back(mqi::load_sweep_tables(counts_dir, s, &stored));
      if (hash.empty()) hash = stored;
    }
    if (hash.empty()) hash = mqi::scenario_hash(sc, opts);
  } else {
    (void)sc.seed();
    hash = mqi::scenario_hash(sc, opts);
    tables = mqi::run_simulation(sc, opts);
  }
  if (!g.out.empty()) {
    const fs::path dir = prepare_out(g);
    std::vector<std::string> files{"manifest.json", "report.json"};
    for (const auto& n : mqi::planned_plot_names(sc.analysis)) files.push_back(n + ".csv");
    mqi::write_text_file(dir / "manifest.json",
                         mqi::manifest_json(sc, opts, hash, "analyze", files).dump(2) + "\n");
    const auto rep = mqi::analyze_scenario(sc, tables);
    mqi::write_report(dir, rep, sc, hash);
    print_report(sc, rep);
  } else {
    print_report(sc, mqi::analyze_scenario(sc, tables));
  }
  return kExitOk;
}

int cmd_tomography(const GlobalOptions& g, const std::string& counts_path) {
  const auto sc = load_config(g, counts_path.empty());
  mqi::Json rep;
  if (!counts_path.empty()) {
    const auto counts = mqi::read_tomography_csv(counts_path);
    const auto r = mqi::reconstruct(counts, sc.bootstrap);
    rep = {{"counts", counts_path}, {"reconstruction", mqi::reconstruction_json(r)}};
    std::cout << "fidelity = " << r.fidelity_vs_ideal.value << " +/- " << r.fidelity_vs_ideal.sigma
              << "\n";
  } else {
    (void)sc.seed();
    const auto tables = mqi::run_simulation(sc, run_options(g));
    const auto a = mqi::analyze_tomography(tables, sc.bootstrap);
    rep = a.summary;
    std::cout << "pooled fidelity = " << rep["pooled"]["fidelity"]["value"] << " +/- "
              << rep["pooled"]["fidelity"]["sigma"] << "\n";
    for (const auto& c : rep["channels"]) {
      std::cout << "channel " << c["channel"] << " fidelity = " << c["fidelity"]["value"] << " +/- "
                << c["fidelity"]["sigma"] << "\n";
    }
  }
  std::cout << "rho (row-major [re, im]):\n";
  const auto& rho = counts_path.empty() ? rep["pooled"]["rho"] : rep["reconstruction"]["rho"];
  for (int r = 0; r < 4; ++r) {
    std::cout << "  ";
    for (int c = 0; c < 4; ++c) {
      const auto& e = rho[static_cast<std::size_t>(4 * r + c)];
      std::cout << std::setw(18) << (fmt(e[0].get<double>(), 4) + (e[1].get<double>() < 0 ? "" : "+") +
                                     fmt(e[1].get<double>(), 4) + "i");
    }
    std::cout << "\n";
  }
  emit(g, "tomography.json", rep);
  return kExitOk;
}

int cmd_link(const GlobalOptions& g, const std::string& cycle_log, std::optional<std::uint64_t> cycles) {
  const auto sc = load_config(g, true);
  if (!sc.link) throw mqi::ConfigError("scenario '" + sc.name + "' has no 'link' section");
  const auto& link = *sc.link;
  const std::uint64_t n = cycles.value_or(sc.link_cycles);
  const auto feas = mqi::heralded_feasible(link);
  const auto det = mqi::deterministic_rate(link);
  std::cout << "L0 = " << link.separation_m << " m, dt = " << mqi::attempt_interval(link)
            << " s, tau0 = " << link.memory_lifetime_s << " s -> "
            << (feas.feasible ? "feasible" : "INFEASIBLE") << " (margin " << feas.margin << ")\n";
  std::cout << "deterministic generation with N_m = " << link.multiplexed_qubits
            << ": storage " << det.required_storage_s << " s, rate " << det.rate_hz << " Hz\n";
  mqi::Json rep = {{"deterministic", {{"required_storage_s", det.required_storage_s},
                                      {"rate_hz", det.rate_hz}}}};
  if (!feas.feasible) {
    rep["L0_m"] = link.separation_m;
    rep["dt_s"] = mqi::attempt_interval(link);
    rep["feasible"] = false;
    rep["margin"] = feas.margin;
    emit(g, "link.json", rep);
    throw mqi::ConfigError("link is not heralded-feasible; no cycles simulated");
  }
  std::ofstream log;
  std::function<void(const mqi::CycleRecord&)> on_cycle;
  if (!cycle_log.empty()) {
    log.open(cycle_log);
    if (!log) throw mqi::ConfigError("cannot write cycle log '" + cycle_log + "'");
    on_cycle = [&](const mqi::CycleRecord& c) { log << mqi::to_json(c).dump() << '\n'; };
  }
  const auto res = mqi::simulate_link(link, sc.node, sc.node, n, sc.seed(), on_cycle);
  const auto r = mqi::link_report(res);
  for (const auto& [k, v] : r.items()) rep[k] = v;
  std::cout << "cycles " << res.cycles << ", successes " << res.successes << ", p = "
            << res.p_success() << " +/- " << res.p_success_sigma() << ", rate "
            << res.rate_hz_wallclock() << " Hz\n";
  emit(g, "link.json", rep);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mqi: multiplexed quantum-interface simulation and analysis"};
  app.set_version_flag("--version", std::string(mqi::kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the scenario)");
  app.add_option("--config", g.config, "scenario / config file (JSON, comments allowed)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--workers", g.workers, "worker threads for simulation")->check(CLI::PositiveNumber);
  app.add_flag("--expected-counts", g.expected_counts,
               "use noiseless expected counts instead of sampled trials");

  auto* geometry = app.add_subcommand("geometry", "mode angles, spin-wave wavelengths, BTD matrices");
  auto* lifetimes = app.add_subcommand("lifetimes", "motional, gradient and combined lifetimes");

  bool event_log = false;
  bool no_analysis = false;
  auto* simulate = app.add_subcommand("simulate", "run a scenario and write tables and reports");
  simulate->add_flag("--event-log", event_log, "write one JSON line per trial (single-threaded)");
  simulate->add_flag("--no-analysis", no_analysis, "write tables only");

  std::string counts_dir, table_file, estimator = "chsh";
  double theta_s = 0.0, theta_t = 0.0;
  auto* analyze = app.add_subcommand("analyze", "estimators over simulated or external tables");
  analyze->add_option("--counts", counts_dir, "run directory written by simulate");
  analyze->add_option("--table", table_file, "single coincidence CSV to analyze");
  analyze->add_option("--estimator", estimator, "chsh | correlation | retrieval (with --table)");
  analyze->add_option("--theta-s-deg", theta_s, "Stokes analyzer angle for correlation");
  analyze->add_option("--theta-t-deg", theta_t, "anti-Stokes analyzer angle for correlation");

  std::string tomo_counts;
  auto* tomography = app.add_subcommand("tomography", "two-qubit state reconstruction");
  tomography->add_option("--counts", tomo_counts, "tomography counts CSV (X,Y,c_xy,...)");

  std::string cycle_log;
  std::uint64_t cycles = 0;
  auto* link = app.add_subcommand("link", "elementary-link feasibility, rates and Monte Carlo");
  link->add_option("--cycle-log", cycle_log, "write one JSON line per cycle");
  auto* cycles_opt = link->add_option("--cycles", cycles, "number of cycles (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*geometry) return cmd_geometry(g);
    if (*lifetimes) return cmd_lifetimes(g);
    if (*simulate) return cmd_simulate(g, event_log, !no_analysis);
    if (*analyze) return cmd_analyze(g, counts_dir, table_file, estimator, theta_s, theta_t);
    if (*tomography) return cmd_tomography(g, tomo_counts);
    if (*link) {
      return cmd_link(g, cycle_log, *cycles_opt ? std::optional<std::uint64_t>(cycles) : std::nullopt);
    }
  } catch (const mqi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mqi::EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const mqi::FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const mqi::ReconstructionError& e) {
    std::cerr << "reconstruction error: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const mqi::DomainError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
