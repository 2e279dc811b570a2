#pragma once

// File formats: coincidence-table CSV, tomography-counts CSV, trial event log
// (JSON lines), density-matrix JSON and the run manifest.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "mqi/coincidence_table.hpp"
#include "mqi/decoherence.hpp"
#include "mqi/errors.hpp"
#include "mqi/node_simulator.hpp"
#include "mqi/optics_geometry.hpp"
#include "mqi/quantum_state.hpp"
#include "mqi/tomography.hpp"

namespace mqi {

using Json = nlohmann::json;

inline constexpr std::string_view kEventLogSchema = "mqi.trial/1";
inline constexpr std::string_view kCycleLogSchema = "mqi.link_cycle/1";
inline constexpr std::array<std::string_view, 10> kCoincidenceColumns{
    "setting_id", "theta_S_deg", "theta_T_deg", "channel", "n_S1T1",
    "n_S1T2",     "n_S2T1",      "n_S2T2",      "n_S1",    "n_S2"};
inline constexpr std::array<std::string_view, 6> kTomographyColumns{
    "X", "Y", "c_xy", "c_xy'", "c_x'y", "c_x'y'"};

// Shortest round-trip representation; integral values print without a
// fractional part so sampled counts read as integers.
inline std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.007199254740992e15) {
    return std::to_string(static_cast<long long>(v));
  }
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// CSV helpers

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

template <std::size_t N>
void check_header(const std::vector<std::string>& header,
                  const std::array<std::string_view, N>& expected, const std::string& file) {
  for (std::size_t i = 0; i < N; ++i) {
    if (i >= header.size()) {
      throw ConfigError(file + ": missing column '" + std::string(expected[i]) + "'");
    }
    if (header[i] != expected[i]) {
      throw ConfigError(file + ": column " + std::to_string(i + 1) + " is '" + header[i] +
                        "', expected '" + std::string(expected[i]) + "'");
    }
  }
  if (header.size() > N) throw ConfigError(file + ": unexpected extra column '" + header[N] + "'");
}

inline double parse_number(const std::string& s, std::string_view column, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(where + ": column '" + std::string(column) + "' has non-numeric value '" +
                      s + "'");
  }
  return v;
}

inline double parse_count(const std::string& s, std::string_view column, const std::string& where) {
  const double v = parse_number(s, column, where);
  if (!(v >= 0.0)) {
    throw ConfigError(where + ": column '" + std::string(column) + "' has negative count");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Coincidence table CSV

/// Writes the angle-setting blocks of a table. Basis (tomography) blocks are
/// written by write_tomography_csv instead.
template <class Count>
void write_coincidence_csv(std::ostream& out, const BasicCoincidenceTable<Count>& table) {
  for (std::size_t i = 0; i < kCoincidenceColumns.size(); ++i) {
    out << (i ? "," : "") << kCoincidenceColumns[i];
  }
  out << '\n';
  for (std::size_t sid = 0; sid < table.setting_count(); ++sid) {
    const auto& b = table.block(sid);
    if (!b.setting.is_angles()) continue;
    for (int c = 1; c <= table.channel_count(); ++c) {
      const auto& k = table.at(sid, c);
      out << sid << ',' << format_number(rad_to_deg(b.setting.theta_s())) << ','
          << format_number(rad_to_deg(b.setting.theta_t())) << ',' << c << ','
          << format_number(static_cast<double>(k.s1t1)) << ','
          << format_number(static_cast<double>(k.s1t2)) << ','
          << format_number(static_cast<double>(k.s2t1)) << ','
          << format_number(static_cast<double>(k.s2t2)) << ','
          << format_number(static_cast<double>(k.s1)) << ','
          << format_number(static_cast<double>(k.s2)) << '\n';
    }
  }
}

/// Reads a coincidence CSV. Storage times and trial counts are not part of
/// the format; `blocks`, when given, supplies them by setting_id.
inline ExpectedCountTable read_coincidence_csv(std::istream& in, const std::string& name,
                                               const std::vector<SettingBlock>* blocks = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(name + ": empty file");
  check_header(split_csv_line(line), kCoincidenceColumns, name);

  struct Row {
    std::size_t setting_id;
    double theta_s_deg, theta_t_deg;
    int channel;
    DetectorCounts<double> counts;
  };
  std::vector<Row> rows;
  std::size_t max_setting = 0;
  int max_channel = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = name + ":" + std::to_string(line_no);
    if (f.size() != kCoincidenceColumns.size()) {
      throw ConfigError(where + ": expected " + std::to_string(kCoincidenceColumns.size()) +
                        " fields, got " + std::to_string(f.size()));
    }
    Row r;
    const double sid = parse_count(f[0], kCoincidenceColumns[0], where);
    r.setting_id = static_cast<std::size_t>(sid);
    r.theta_s_deg = parse_number(f[1], kCoincidenceColumns[1], where);
    r.theta_t_deg = parse_number(f[2], kCoincidenceColumns[2], where);
    const double ch = parse_number(f[3], kCoincidenceColumns[3], where);
    if (ch < 1 || ch != std::floor(ch)) {
      throw ConfigError(where + ": column 'channel' must be an integer >= 1");
    }
    r.channel = static_cast<int>(ch);
    r.counts = {parse_count(f[4], kCoincidenceColumns[4], where),
                parse_count(f[5], kCoincidenceColumns[5], where),
                parse_count(f[6], kCoincidenceColumns[6], where),
                parse_count(f[7], kCoincidenceColumns[7], where),
                parse_count(f[8], kCoincidenceColumns[8], where),
                parse_count(f[9], kCoincidenceColumns[9], where)};
    max_setting = std::max(max_setting, r.setting_id);
    max_channel = std::max(max_channel, r.channel);
    rows.push_back(r);
  }
  if (rows.empty()) throw ConfigError(name + ": no data rows");

  ExpectedCountTable table(max_channel);
  std::vector<bool> seen(max_setting + 1, false);
  std::vector<std::pair<double, double>> angles(max_setting + 1);
  for (const auto& r : rows) {
    seen[r.setting_id] = true;
    angles[r.setting_id] = {r.theta_s_deg, r.theta_t_deg};
  }
  // Setting ids are kept; ids absent from the file (e.g. basis blocks)
  // become empty placeholders.
  for (std::size_t sid = 0; sid <= max_setting; ++sid) {
    SettingBlock b;
    if (blocks != nullptr && sid < blocks->size()) b = (*blocks)[sid];
    if (seen[sid]) {
      b.setting = PolarizationSetting::angles_deg(angles[sid].first, angles[sid].second);
    }
    table.add_setting(b);
  }
  for (const auto& r : rows) {
    const auto& b = table.block(r.setting_id);
    if (std::abs(rad_to_deg(b.setting.theta_s()) - r.theta_s_deg) > 1e-9 ||
        std::abs(rad_to_deg(b.setting.theta_t()) - r.theta_t_deg) > 1e-9) {
      throw ConfigError(name + ": setting_id " + std::to_string(r.setting_id) +
                        " appears with different angles");
    }
    table.at(r.setting_id, r.channel) += r.counts;
  }
  return table;
}

inline ExpectedCountTable read_coincidence_csv(const std::string& path,
                                               const std::vector<SettingBlock>* blocks = nullptr) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open coincidence table '" + path + "'");
  return read_coincidence_csv(in, path, blocks);
}

// ---------------------------------------------------------------------------
// Tomography counts CSV

inline void write_tomography_csv(std::ostream& out, const TomographyCounts& counts) {
  for (std::size_t i = 0; i < kTomographyColumns.size(); ++i) {
    out << (i ? "," : "") << kTomographyColumns[i];
  }
  out << '\n';
  for (BasisLabel x : kBasisLabels) {
    for (BasisLabel y : kBasisLabels) {
      const auto& g = counts(x, y);
      out << to_string(x) << ',' << to_string(y);
      for (double c : g) out << ',' << format_number(c);
      out << '\n';
    }
  }
}

inline TomographyCounts read_tomography_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(name + ": empty file");
  check_header(split_csv_line(line), kTomographyColumns, name);
  TomographyCounts counts;
  std::array<bool, 9> seen{};
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = name + ":" + std::to_string(line_no);
    if (f.size() != kTomographyColumns.size()) {
      throw ConfigError(where + ": expected 6 fields, got " + std::to_string(f.size()));
    }
    BasisLabel x{}, y{};
    try {
      x = parse_basis_label(f[0]);
      y = parse_basis_label(f[1]);
    } catch (const DomainError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    const int g = TomographyCounts::group_index(x, y);
    if (seen[static_cast<std::size_t>(g)]) {
      throw ConfigError(where + ": duplicate setting (" + f[0] + ", " + f[1] + ")");
    }
    seen[static_cast<std::size_t>(g)] = true;
    for (int k = 0; k < 4; ++k) {
      counts.groups[g][k] = parse_count(f[2 + k], kTomographyColumns[2 + k], where);
    }
  }
  for (BasisLabel x : kBasisLabels) {
    for (BasisLabel y : kBasisLabels) {
      if (!seen[static_cast<std::size_t>(TomographyCounts::group_index(x, y))]) {
        throw ConfigError(name + ": missing setting (" + std::string(to_string(x)) + ", " +
                          std::string(to_string(y)) + ")");
      }
    }
  }
  return counts;
}

inline TomographyCounts read_tomography_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open tomography counts '" + path + "'");
  return read_tomography_csv(in, path);
}

// ---------------------------------------------------------------------------
// JSON serializations

// Row-major array of [re, im] pairs.
inline Json to_json(const DensityMatrix4& rho) {
  Json rows = Json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) rows.push_back({rho(r, c).real(), rho(r, c).imag()});
  }
  return rows;
}

inline DensityMatrix4 density_matrix_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 16) {
    throw ConfigError("density matrix must be an array of 16 [re, im] pairs");
  }
  Matrix4c m;
  for (int k = 0; k < 16; ++k) {
    const auto& e = j[static_cast<std::size_t>(k)];
    if (!e.is_array() || e.size() != 2) throw ConfigError("density matrix entry must be [re, im]");
    m(k / 4, k % 4) = Complex(e[0].get<double>(), e[1].get<double>());
  }
  try {
    return DensityMatrix4(m);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

inline Json to_json(const PolarizationSetting& s) {
  if (s.is_angles()) {
    return {{"theta_S_deg", rad_to_deg(s.theta_s())}, {"theta_T_deg", rad_to_deg(s.theta_t())}};
  }
  return {{"X", std::string(to_string(s.x()))}, {"Y", std::string(to_string(s.y()))}};
}

inline PolarizationSetting setting_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("setting must be an object");
  if (j.contains("X") || j.contains("Y")) {
    if (!j.contains("X") || !j.contains("Y") || j.size() != 2) {
      throw ConfigError("tomography setting needs exactly the keys X and Y");
    }
    try {
      return PolarizationSetting::basis(parse_basis_label(j.at("X").get<std::string>()),
                                        parse_basis_label(j.at("Y").get<std::string>()));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  if (!j.contains("theta_S_deg") || !j.contains("theta_T_deg") || j.size() != 2) {
    throw ConfigError("angle setting needs exactly the keys theta_S_deg and theta_T_deg");
  }
  return PolarizationSetting::angles_deg(j.at("theta_S_deg").get<double>(),
                                         j.at("theta_T_deg").get<double>());
}

inline Json to_json(const SettingBlock& b, std::size_t id) {
  Json j = to_json(b.setting);
  j["setting_id"] = id;
  j["storage_time_s"] = b.storage_time_s;
  j["n_trials"] = b.n_trials;
  return j;
}

inline Json to_json(const TrialRecord& rec) {
  Json channels = Json::array();
  for (const auto& c : rec.channels) {
    channels.push_back({{"branch", to_string(c.branch)}, {"stokes", to_string(c.stokes)}});
  }
  return {{"schema", kEventLogSchema},
          {"trial_id", rec.trial_id},
          {"setting_id", rec.setting_id},
          {"storage_time_s", rec.storage_time_s},
          {"channels", channels},
          {"selected_channel", rec.selected_channel},
          {"retrieved", rec.retrieved},
          {"anti_stokes", to_string(rec.anti_stokes)}};
}

inline Json to_json(const EstimateWithError& e) { return {{"value", e.value}, {"sigma", e.sigma}}; }

inline Json constants_table() {
  return {{"k_B_J_per_K", constants::kBoltzmann},
          {"mu_B_J_per_T", constants::kBohrMagneton},
          {"h_J_s", constants::kPlanck},
          {"g_a", constants::kLandeA},
          {"delta_g", constants::kLandeSum}};
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace mqi
