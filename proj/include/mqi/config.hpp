#pragma once

// Structured-text (JSON with comments) configuration. Every key carries its
// unit in the name; unknown keys are rejected so unit typos fail loudly.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mqi/analysis.hpp"
#include "mqi/decoherence.hpp"
#include "mqi/errors.hpp"
#include "mqi/link_simulator.hpp"
#include "mqi/node_simulator.hpp"
#include "mqi/optics_geometry.hpp"

namespace mqi {

using Json = nlohmann::json;

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return Json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

inline Json parse_json_text(const std::string& text) {
  try {
    return Json::parse(text, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

// Reads keys from one JSON object section and reports any it did not consume.
class SectionReader {
 public:
  SectionReader(const Json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_null() && !j_.is_object()) {
      throw ConfigError("config section '" + section_ + "' must be an object");
    }
  }

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError("config key '" + section_ + "." + key + "': " + e.what());
    }
  }

  const Json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    if (!j_.is_object()) return;
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown config key '" + section_ + "." + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string section_;
  std::set<std::string> used_;
};

inline std::vector<double> us_to_s(const std::vector<double>& us) {
  std::vector<double> s;
  for (double v : us) s.push_back(v * 1e-6);
  return s;
}
inline std::vector<double> s_to_us(const std::vector<double>& s) {
  std::vector<double> us;
  for (double v : s) us.push_back(v * 1e6);
  return us;
}

// ---------------------------------------------------------------------------
// Node

inline NodeConfig node_config_from_json(const Json& j, NodeConfig cfg = {},
                                        const std::string& section = "node") {
  SectionReader r(j, section);
  r.read("mode_count", cfg.mode_count);
  r.read("excitation_probability", cfg.excitation_probability);
  r.read("stokes_efficiency", cfg.stokes_efficiency);
  r.read("anti_stokes_efficiency", cfg.anti_stokes_efficiency);
  r.read("switch_efficiency", cfg.switch_efficiency);
  r.read("mfs_probability", cfg.mfs_probability);
  r.read("gamma0", cfg.gamma0);
  r.read("initial_visibility", cfg.noise.initial_visibility);
  r.read("visibility_decay_s", cfg.noise.visibility_decay_s);
  r.read("residual_phase_rad", cfg.noise.residual_phase);
  r.read("storage_time_s", cfg.storage_time_s);
  if (r.has("lifetimes_us")) {
    std::vector<double> us;
    r.read("lifetimes_us", us);
    cfg.lifetimes_s = us_to_s(us);
  } else if (static_cast<int>(cfg.lifetimes_s.size()) != cfg.mode_count &&
             !cfg.lifetimes_s.empty()) {
    // Mode count changed without a lifetime list: reuse the configured
    // lifetimes cyclically (the three-channel defaults are symmetric).
    std::vector<double> resized;
    for (int i = 0; i < cfg.mode_count; ++i) {
      resized.push_back(cfg.lifetimes_s[static_cast<std::size_t>(i) % cfg.lifetimes_s.size()]);
    }
    cfg.lifetimes_s = resized;
  }
  r.finish();
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw ConfigError(section + ": " + e.what());
  }
  return cfg;
}

inline Json to_json(const NodeConfig& c) {
  return {{"mode_count", c.mode_count},
          {"excitation_probability", c.excitation_probability},
          {"stokes_efficiency", c.stokes_efficiency},
          {"anti_stokes_efficiency", c.anti_stokes_efficiency},
          {"switch_efficiency", c.switch_efficiency},
          {"mfs_probability", c.mfs_probability},
          {"gamma0", c.gamma0},
          {"initial_visibility", c.noise.initial_visibility},
          {"visibility_decay_s", c.noise.visibility_decay_s},
          {"residual_phase_rad", c.noise.residual_phase},
          {"storage_time_s", c.storage_time_s},
          {"lifetimes_us", s_to_us(c.lifetimes_s)}};
}

// ---------------------------------------------------------------------------
// Geometry

struct GeometryConfig {
  ArrayGeometry array{};
  double shrink_factor = 2.0;
  double btd_focal_m = 2.0;
  double focused_spot_m = kDefaultFocusedSpotM;
  double atomic_size_m = kDefaultAtomicTransverseSizeM;
};

inline GeometryConfig geometry_config_from_json(const Json& j, GeometryConfig g = {}) {
  SectionReader r(j, "geometry");
  r.read("channel_count", g.array.channel_count);
  r.read("beam_separation_m", g.array.beam_separation_m);
  r.read("focal_length_m", g.array.focal_length_m);
  r.read("write_wavelength_m", g.array.write_wavelength_m);
  r.read("array_rows", g.array.rows);
  r.read("array_cols", g.array.cols);
  r.read("shrink_factor", g.shrink_factor);
  r.read("btd_focal_m", g.btd_focal_m);
  r.read("focused_spot_m", g.focused_spot_m);
  r.read("atomic_size_m", g.atomic_size_m);
  r.finish();
  try {
    g.array.validate();
    check_btd_args(g.btd_focal_m, g.shrink_factor);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  }
  return g;
}

inline Json to_json(const GeometryConfig& g) {
  return {{"channel_count", g.array.channel_count},
          {"beam_separation_m", g.array.beam_separation_m},
          {"focal_length_m", g.array.focal_length_m},
          {"write_wavelength_m", g.array.write_wavelength_m},
          {"array_rows", g.array.grid_rows()},
          {"array_cols", g.array.grid_cols()},
          {"shrink_factor", g.shrink_factor},
          {"btd_focal_m", g.btd_focal_m},
          {"focused_spot_m", g.focused_spot_m},
          {"atomic_size_m", g.atomic_size_m}};
}

// ---------------------------------------------------------------------------
// Ensemble / lifetimes

struct EnsembleConfig {
  AtomEnsemble atoms{};
  Coherence coherence = Coherence::field_insensitive();
  std::vector<double> fitted_lifetimes_s{730e-6, 1170e-6, 730e-6};
};

inline EnsembleConfig ensemble_config_from_json(const Json& j, EnsembleConfig e = {}) {
  SectionReader r(j, "ensemble");
  r.read("temperature_K", e.atoms.temperature_K);
  r.read("atomic_mass_kg", e.atoms.atomic_mass_kg);
  r.read("ensemble_length_m", e.atoms.length_m);
  r.read("field_gradient_T_per_m", e.atoms.field_gradient_T_per_m);
  r.read("g_a", e.atoms.g_a);
  r.read("delta_g", e.atoms.delta_g);
  if (r.has("coherence")) {
    SectionReader c(r.raw("coherence"), "ensemble.coherence");
    c.read("m_a", e.coherence.m_a);
    c.read("m_b", e.coherence.m_b);
    c.finish();
  }
  if (r.has("lifetimes_us")) {
    std::vector<double> us;
    r.read("lifetimes_us", us);
    e.fitted_lifetimes_s = us_to_s(us);
  }
  r.finish();
  try {
    e.atoms.validate();
    e.coherence.validate();
  } catch (const DomainError& err) {
    throw ConfigError(std::string("ensemble: ") + err.what());
  }
  return e;
}

inline Json to_json(const EnsembleConfig& e) {
  return {{"temperature_K", e.atoms.temperature_K},
          {"atomic_mass_kg", e.atoms.atomic_mass_kg},
          {"ensemble_length_m", e.atoms.length_m},
          {"field_gradient_T_per_m", e.atoms.field_gradient_T_per_m},
          {"g_a", e.atoms.g_a},
          {"delta_g", e.atoms.delta_g},
          {"coherence", {{"m_a", e.coherence.m_a}, {"m_b", e.coherence.m_b}}},
          {"lifetimes_us", s_to_us(e.fitted_lifetimes_s)}};
}

// ---------------------------------------------------------------------------
// Link

inline LinkConfig link_config_from_json(const Json& j, LinkConfig l = {},
                                        std::uint64_t* cycles = nullptr) {
  SectionReader r(j, "link");
  r.read("separation_m", l.separation_m);
  r.read("fiber_speed_m_per_s", l.fiber_speed_m_per_s);
  if (r.has("memory_lifetime_s") && r.raw("memory_lifetime_s").is_string()) {
    if (r.raw("memory_lifetime_s").get<std::string>() != "unbounded") {
      throw ConfigError("link.memory_lifetime_s must be a number or \"unbounded\"");
    }
    l.memory_lifetime_s = kUnbounded;
  } else {
    r.read("memory_lifetime_s", l.memory_lifetime_s);
  }
  r.read("multiplexed_qubits", l.multiplexed_qubits);
  r.read("attempt_success_probability", l.attempt_success_probability);
  r.read("required_storage_single_s", l.required_storage_single_s);
  if (cycles != nullptr) r.read("cycles", *cycles);
  r.finish();
  try {
    l.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("link: ") + e.what());
  }
  return l;
}

inline Json to_json(const LinkConfig& l) {
  Json j = {{"separation_m", l.separation_m},
            {"fiber_speed_m_per_s", l.fiber_speed_m_per_s},
            {"multiplexed_qubits", l.multiplexed_qubits},
            {"attempt_success_probability", l.attempt_success_probability},
            {"required_storage_single_s", l.required_storage_single_s}};
  if (is_unbounded(l.memory_lifetime_s)) {
    j["memory_lifetime_s"] = "unbounded";
  } else {
    j["memory_lifetime_s"] = l.memory_lifetime_s;
  }
  return j;
}

}  // namespace mqi
