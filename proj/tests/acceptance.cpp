// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Uses the bundled scenarios with their fixed seeds.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mqi/io.hpp"
#include "mqi/scenario.hpp"

using namespace mqi;

namespace {

const std::string kScenarioDir = MQI_SCENARIO_DIR;

struct Check {
  std::string what;
  bool ok;
};

struct Criterion {
  int id;
  std::string title;
  std::vector<Check> checks;
  double seconds = 0.0;
  std::string error;

  void expect(bool ok, const std::string& what) { checks.push_back({what, ok}); }
  void near(double got, double target, double tol, const std::string& label) {
    std::ostringstream os;
    os << label << " = " << got << " (target " << target << " +/- " << tol << ")";
    expect(std::abs(got - target) <= tol, os.str());
  }
  void within(double got, double lo, double hi, const std::string& label) {
    std::ostringstream os;
    os << label << " = " << got << " (range [" << lo << ", " << hi << "])";
    expect(got >= lo && got <= hi, os.str());
  }
  bool passed() const {
    if (!error.empty() || checks.empty()) return false;
    for (const auto& c : checks) {
      if (!c.ok) return false;
    }
    return true;
  }
};

std::vector<SweepTable> simulate(const Scenario& sc) {
  return run_simulation(sc, {std::max(1u, std::thread::hardware_concurrency()), false});
}

double value_of(const Json& j) { return j.at("value").get<double>(); }

// Random physical state built as G G^dagger / tr.
DensityMatrix4 random_state(std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  Matrix4c g;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) g(r, c) = Complex(n(gen), n(gen));
  }
  Matrix4c m = g * g.adjoint();
  m /= m.trace().real();
  return DensityMatrix4(0.5 * (m + m.adjoint()));
}

void criterion_geometry(Criterion& c) {
  const ArrayGeometry g;  // B_f = 2 mm, f = 1.425 m
  const double printed[3] = {0.090, 0.040, 0.090};
  for (int i = 1; i <= 3; ++i) {
    c.near(rad_to_deg(mode_angle(i, g)), printed[i - 1], 0.01 * printed[i - 1],
           "mode_angle(" + std::to_string(i) + ") deg");
  }
}

void criterion_lifetimes(Criterion& c) {
  const ArrayGeometry g;
  const AtomEnsemble e;
  const double v = mean_thermal_speed(e);
  const double printed[3] = {840.0, 1850.0, 840.0};
  for (int i = 1; i <= 3; ++i) {
    const double t = motional_lifetime(mode_angle(i, g), g.write_wavelength_m, v) * 1e6;
    c.near(t, printed[i - 1], 0.03 * printed[i - 1], "motional lifetime ch" + std::to_string(i) + " us");
  }
  c.near(gradient_lifetime(e, Coherence::field_insensitive()) * 1e3, 32.0, 1.6,
         "MFI gradient lifetime ms");
}

void criterion_btd(Criterion& c) {
  std::mt19937_64 gen(20240601);
  std::uniform_real_distribution<double> fl(0.05, 5.0), ff(0.2, 8.0);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const double f = fl(gen), F = ff(gen);
    for (auto dir : {BtdDirection::Shrink, BtdDirection::Expand}) {
      const RayMatrix a = btd_matrix(f, F, dir);
      const RayMatrix b = btd_matrix_product(f, F, dir);
      worst = std::max({worst, std::abs(a.a - b.a), std::abs(a.b - b.b), std::abs(a.c - b.c),
                        std::abs(a.d - b.d)});
    }
  }
  std::ostringstream os;
  os << "max |closed - product| over 100 random (f, F) = " << worst;
  c.expect(worst <= 1e-12, os.str());
  const RayMatrix s = btd_matrix(2.0, 2.0, BtdDirection::Shrink);
  const RayMatrix x = btd_matrix(2.0, 2.0, BtdDirection::Expand);
  c.expect(s.a == 0.5 && s.b == 1.0 && s.c == 0.0 && s.d == 2.0, "shrink(F=2, f=2 m) == [[1/2, 1], [0, 2]]");
  c.expect(x.a == 2.0 && x.b == 1.0 && x.c == 0.0 && x.d == 0.5, "expand(F=2, f=2 m) == [[2, 1], [0, 1/2]]");
}

void criterion_retrieval(Criterion& c) {
  const auto sc = load_scenario(kScenarioDir + "/fig2_retrieval.json");
  const auto rep = analyze_retrieval(simulate(sc), sc.bootstrap);
  const Json& fit = rep.summary.at("fit");
  c.near(value_of(fit.at("gamma0")), 0.15, 0.01, "fitted gamma0");
  c.near(value_of(fit.at("tau0_us")), 870.0, 60.0, "fitted tau0 us");
  c.near(rep.summary.at("configured_mean_lifetime_us").get<double>(), 876.0, 1.0,
         "configured mean lifetime us");
}

// Per-setting trial count whose expected coincidences make the analytic CHSH
// sigma at S equal `target_sigma`.
std::uint64_t trials_for_sigma(const NodeConfig& node, double t, double s, double target_sigma) {
  const double n_coinc = 4.0 * (1.0 - (s / 4.0) * (s / 4.0)) / (target_sigma * target_sigma);
  const auto per_trial =
      expected_counts(node, {{PolarizationSetting::angles(0.0, std::numbers::pi / 8), t, 1}});
  return static_cast<std::uint64_t>(std::llround(n_coinc / per_trial.total(0).coincidences()));
}

void criterion_bell(Criterion& c) {
  const auto sc = load_scenario(kScenarioDir + "/fig3_bell.json");
  const auto rep = analyze_bell(simulate(sc), sc.bootstrap);
  for (const auto& p : rep.summary.at("points")) {
    const double t = p.at("storage_time_s").get<double>();
    std::ostringstream label;
    label << "S(t = " << t * 1e6 << " us), bootstrap sigma " << p.at("S").at("sigma").get<double>();
    if (std::abs(t - 1e-6) < 1e-12) c.near(value_of(p.at("S")), 2.50, 0.05, label.str());
    if (std::abs(t - 1e-3) < 1e-12) c.near(value_of(p.at("S")), 2.07, 0.05, label.str());
  }
  // Significance at the count scale where the analytic sigma of S(1 ms) is 0.02.
  const NodeConfig& node = sc.sweeps[0].node;
  const double t = 1e-3;
  const double s_model = 2.0 * std::numbers::sqrt2 * node.noise.visibility(t);
  Sweep sw = sc.sweeps[0];
  sw.storage_times_s = {t};
  sw.n_trials = trials_for_sigma(node, t, s_model, 0.02);
  const auto table = expected_counts(node, sw.schedule());
  const auto s = chsh(table, ChshAngles{}, Selection{{}, t}, sc.bootstrap);
  std::ostringstream label;
  label << "violation significance (S - 2)/sigma at " << sw.n_trials << " trials/setting, S = " << s.value
        << ", sigma = " << s.sigma;
  c.near((s.value - 2.0) / s.sigma, 3.5, 1.0, label.str());
}

void criterion_tomography(Criterion& c) {
  std::mt19937_64 gen(8675309);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const auto rho = random_state(gen);
    const auto back = reconstruct_state(tomography_expected_counts(rho, 1e4));
    worst = std::max(worst, (back.matrix() - rho.matrix()).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "expected-count round-trip max |delta rho| over 100 random states = " << worst;
  c.expect(worst <= 1e-9, os.str());

  const auto sc = load_scenario(kScenarioDir + "/tomography.json");
  const auto rep = analyze_tomography(simulate(sc), sc.bootstrap);
  c.within(value_of(rep.summary.at("pooled").at("fidelity")), 0.89, 0.93, "pooled fidelity");
  c.within(rep.summary.at("channel_max_pairwise_z").get<double>(), 0.0, 3.0,
           "max pairwise z between channel fidelities");
}

void criterion_multiplex(Criterion& c) {
  const auto sc = load_scenario(kScenarioDir + "/fig4_gain.json");
  const auto rep = analyze_multiplex(simulate(sc));
  for (const auto& p : rep.summary.at("points")) {
    if (p.at("modes").get<int>() == 3) c.near(value_of(p.at("singles_gain")), 3.0, 0.05, "P_S(3)/P_S(1)");
  }
  for (const auto& g : rep.summary.at("vs_baseline").at("gains")) {
    if (g.at("modes").get<int>() == 3) {
      c.near(value_of(g.at("coincidence_gain")), 2.40, 0.05,
             "coincidence gain m=3 (switch network) vs single-mode baseline");
    }
  }
}

void criterion_link(Criterion& c) {
  LinkConfig l;
  l.separation_m = 200e3;
  c.expect(attempt_interval(l) == 1e-3, "attempt_interval(200 km) == 1 ms exactly");
  l.separation_m = 10e3;
  l.memory_lifetime_s = 50e-6;
  c.expect(!heralded_feasible(l).feasible, "tau0 = 50 us, L0 = 10 km is infeasible");
  LinkConfig d;
  d.multiplexed_qubits = 650;
  const auto r = deterministic_rate(d);
  c.near(r.required_storage_s, 0.2308, 0.00005, "required storage at N_m = 650 (s)");
  c.near(r.rate_hz, 4.33, 0.005, "deterministic rate at N_m = 650 (Hz)");
}

void criterion_properties(Criterion& c) {
  std::mt19937_64 gen(1234);
  std::uniform_real_distribution<double> ang(0.0, std::numbers::pi);

  // Tsirelson bound on noiseless expected-count tables.
  double max_s = 0.0;
  for (int n = 0; n < 500; ++n) {
    const auto rho = random_state(gen);
    const ChshAngles a{ang(gen), ang(gen), ang(gen), ang(gen)};
    ExpectedCountTable t(1);
    for (auto [ts, tt] : {std::pair{a.theta_s, a.theta_t}, std::pair{a.theta_s, a.theta_t_prime},
                          std::pair{a.theta_s_prime, a.theta_t},
                          std::pair{a.theta_s_prime, a.theta_t_prime}}) {
      const auto setting = PolarizationSetting::angles(ts, tt);
      const auto id = t.add_setting({setting, 0.0, 1});
      const auto p = outcome_probabilities(rho, setting);
      t.at(id, 1) = {1e4 * p[0][0], 1e4 * p[0][1], 1e4 * p[1][0], 1e4 * p[1][1], 0.0, 0.0};
    }
    max_s = std::max(max_s, std::abs(chsh_value(t, a)));
  }
  {
    // Ideal state at the canonical angles reaches the bound itself.
    NodeConfig ideal;
    ideal.noise.initial_visibility = 1.0;
    ideal.noise.visibility_decay_s = kUnbounded;
    std::vector<SettingBlock> s;
    for (const auto& p : settings_preset("chsh")) s.push_back({p, 0.0, 1000});
    max_s = std::max(max_s, chsh_value(expected_counts(ideal, s)));
  }
  std::ostringstream os;
  os << "max S over noiseless tables = " << max_s << " (bound 2 sqrt 2 + 1e-10)";
  c.expect(max_s <= 2.0 * std::numbers::sqrt2 + 1e-10, os.str());

  // |E| <= 1 on sampled tables, and worker-count determinism of the tables.
  NodeConfig node;
  node.excitation_probability = 0.05;
  std::vector<SettingBlock> sched;
  for (int k = 0; k < 6; ++k) sched.push_back({PolarizationSetting::angles(ang(gen), ang(gen)), 2e-4 * k, 100000});
  const auto one = run_batch(node, sched, {42, 1, {}});
  bool bounded = true;
  for (std::size_t id = 0; id < one.setting_count(); ++id) {
    const auto& b = one.block(id);
    for (int ch = 1; ch <= one.channel_count(); ++ch) {
      const auto& k = one.at(id, ch);
      if (k.coincidences() == 0) continue;
      const double e = (double(k.matched()) - double(k.crossed())) / double(k.coincidences());
      bounded = bounded && std::abs(e) <= 1.0;
    }
    bounded = bounded && std::abs(correlation_value(one, b.setting.theta_s(), b.setting.theta_t(),
                                                    Selection{{}, b.storage_time_s})) <= 1.0;
  }
  c.expect(bounded, "|E| <= 1 on every sampled block and channel");

  std::ostringstream base;
  write_coincidence_csv(base, one);
  bool identical = true;
  for (unsigned w : {2u, 4u, 8u}) {
    std::ostringstream other;
    write_coincidence_csv(other, run_batch(node, sched, {42, w, {}}));
    identical = identical && other.str() == base.str();
  }
  c.expect(identical, "coincidence tables byte-identical for 1, 2, 4, 8 workers");

  // Density-matrix invariants of reconstructions from sampled counts.
  const auto tsc = load_scenario(kScenarioDir + "/tomography.json");
  Sweep tsw = tsc.sweeps[0];
  tsw.n_trials = 200000;
  tsw.node.excitation_probability = 0.1;
  const auto ttab = run_batch(tsw.node, tsw.schedule(), {7, 1, {}});
  bool invariants = true;
  for (int ch = 0; ch <= tsw.node.mode_count; ++ch) {
    const auto counts = ch == 0 ? tomography_counts(ttab) : tomography_counts(ttab, Selection{{ch}, {}});
    const auto rho = reconstruct_state(counts);
    const auto& m = rho.matrix();
    invariants = invariants && std::abs(m.trace().real() - 1.0) < 1e-12 &&
                 (m - m.adjoint()).cwiseAbs().maxCoeff() < 1e-12 && rho.min_eigenvalue() >= -1e-12;
  }
  c.expect(invariants, "reconstructed states: unit trace, Hermitian, PSD (pooled and per channel)");

  // MFS branch never produces a Stokes click.
  NodeConfig mfs;
  mfs.excitation_probability = 0.3;
  mfs.stokes_efficiency = 1.0;
  std::uint64_t mfs_pairs = 0, violations = 0;
  run_batch(mfs, {{PolarizationSetting::angles(0, 0), 1e-6, 300000}},
            {11, 1, [&](const TrialRecord& r) {
               for (const auto& ch : r.channels) {
                 if (ch.branch != Branch::MFS) continue;
                 ++mfs_pairs;
                 if (ch.stokes != Click::None) ++violations;
               }
             }});
  std::ostringstream ms;
  ms << "MFS pairs with a Stokes click: " << violations << " of " << mfs_pairs;
  c.expect(violations == 0 && mfs_pairs > 0, ms.str());
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Criterion&)>>> plan{
      {"geometry: mode angles", criterion_geometry},
      {"lifetimes: motional and gradient", criterion_lifetimes},
      {"BTD ray matrices", criterion_btd},
      {"retrieval-efficiency scenario", criterion_retrieval},
      {"Bell scenario", criterion_bell},
      {"tomography", criterion_tomography},
      {"multiplexing gain", criterion_multiplex},
      {"link arithmetic", criterion_link},
      {"property suite", criterion_properties},
  };
  int failed = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    Criterion c{static_cast<int>(i + 1), plan[i].first, {}, 0.0, {}};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      plan[i].second(c);
    } catch (const std::exception& e) {
      c.error = e.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = c.passed();
    failed += ok ? 0 : 1;
    std::printf("%s criterion %d: %s (%.1f s)\n", ok ? "PASS" : "FAIL", c.id, c.title.c_str(), c.seconds);
    for (const auto& ch : c.checks) std::printf("    [%s] %s\n", ch.ok ? "ok" : "FAIL", ch.what.c_str());
    if (!c.error.empty()) std::printf("    error: %s\n", c.error.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(plan.size()) - failed, plan.size());
  return failed == 0 ? 0 : 1;
}
