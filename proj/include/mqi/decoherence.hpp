#pragma once

// Spin-wave lifetime models and the exponential retrieval-efficiency decay.

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mqi/errors.hpp"

namespace mqi {

namespace constants {
inline constexpr double kBoltzmann = 1.380649e-23;      // J/K
inline constexpr double kBohrMagneton = 9.274e-24;      // J/T
inline constexpr double kPlanck = 6.626e-34;            // J s
inline constexpr double kRb87Mass = 1.443e-25;          // kg
inline constexpr double kLandeA = 0.5018;               // g_a
inline constexpr double kLandeSum = -0.002;             // g_a + g_b
}  // namespace constants

// Lifetimes use +infinity for "no decay from this mechanism".
inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

inline bool is_unbounded(double lifetime) { return std::isinf(lifetime) && lifetime > 0.0; }

struct AtomEnsemble {
  double temperature_K = 100e-6;
  double atomic_mass_kg = constants::kRb87Mass;
  double length_m = 5e-3;                       // extent along the gradient
  double field_gradient_T_per_m = 22e-7 / 1e-2;  // 22 mG/cm
  double g_a = constants::kLandeA;
  double delta_g = constants::kLandeSum;

  void validate() const {
    if (!(temperature_K > 0.0)) throw DomainError("temperature must be > 0");
    if (!(atomic_mass_kg > 0.0)) throw DomainError("atomic mass must be > 0");
    if (!(length_m > 0.0)) throw DomainError("ensemble length must be > 0");
    if (!(field_gradient_T_per_m >= 0.0)) throw DomainError("field gradient must be >= 0");
  }
};

// Zeeman coherence |F=1, m_a> <-> |F=2, m_b>.
struct Coherence {
  int m_a = -1;
  int m_b = 1;

  void validate() const {
    if (m_a < -1 || m_a > 1) throw DomainError("m_a must lie in [-1, 1]");
    if (m_b < -2 || m_b > 2) throw DomainError("m_b must lie in [-2, 2]");
  }

  static constexpr Coherence field_insensitive() { return {-1, 1}; }
  static constexpr Coherence field_sensitive() { return {-1, -1}; }
};

struct DecayCurve {
  double gamma0 = 0.15;
  double tau0_s = 870e-6;

  void validate() const {
    if (!(gamma0 > 0.0 && gamma0 <= 1.0)) throw DomainError("gamma0 must lie in (0, 1]");
    if (!(tau0_s > 0.0)) throw DomainError("tau0 must be > 0");
  }
};

// sqrt(k_B T / m)
inline double mean_thermal_speed(const AtomEnsemble& ens) {
  if (ens.temperature_K == 0.0) return 0.0;
  ens.validate();
  return std::sqrt(constants::kBoltzmann * ens.temperature_K / ens.atomic_mass_kg);
}

/// Motion-limited lifetime 1 / (k_w theta v) = lambda_w / (2 pi theta v).
///
/// The quoted form Lambda / v with Lambda = 2 pi / (k_w theta) is larger by
/// 2 pi than the printed reference lifetimes; this form matches them.
inline double motional_lifetime(double theta, double write_wavelength_m, double speed) {
  if (!(theta > 0.0)) throw DomainError("motional_lifetime: angle must be > 0");
  if (!(write_wavelength_m > 0.0)) throw DomainError("write wavelength must be > 0");
  if (!(speed > 0.0)) throw DomainError("motional_lifetime: mean speed must be > 0");
  return write_wavelength_m / (2.0 * std::numbers::pi * theta * speed);
}

// Zeeman-splitting spread across the ensemble, in Hz.
inline double gradient_splitting(const AtomEnsemble& ens, const Coherence& coh) {
  ens.validate();
  coh.validate();
  const double g = std::abs(ens.g_a * (coh.m_a + coh.m_b) + ens.delta_g * coh.m_b);
  return g * constants::kBohrMagneton * ens.length_m * ens.field_gradient_T_per_m /
         constants::kPlanck;
}

// 1/K; unbounded when K = 0.
inline double gradient_lifetime(const AtomEnsemble& ens, const Coherence& coh) {
  const double k = gradient_splitting(ens, coh);
  return k > 0.0 ? 1.0 / k : kUnbounded;
}

inline double combined_lifetime(double motional_s, double gradient_s) {
  if (!(motional_s > 0.0) || !(gradient_s > 0.0)) {
    throw DomainError("combined_lifetime: lifetimes must be > 0");
  }
  if (is_unbounded(motional_s)) return gradient_s;
  if (is_unbounded(gradient_s)) return motional_s;
  return motional_s * gradient_s / (motional_s + gradient_s);
}

inline double retrieval_efficiency_model(double t, const DecayCurve& curve) {
  if (t < 0.0) throw DomainError("storage time must be non-negative");
  curve.validate();
  return curve.gamma0 * std::exp(-t / curve.tau0_s);
}

inline double mean_lifetime(std::span<const double> lifetimes) {
  if (lifetimes.empty()) throw DomainError("mean_lifetime: empty list");
  return std::accumulate(lifetimes.begin(), lifetimes.end(), 0.0) /
         static_cast<double>(lifetimes.size());
}

struct DecaySample {
  double t_s;
  double gamma;
};

/// Unweighted least-squares fit of ln(gamma) = ln(gamma0) - t / tau0.
/// Two samples give exact interpolation.
inline DecayCurve fit_exponential(std::span<const DecaySample> samples) {
  if (samples.size() < 2) throw FitError("fit_exponential needs at least 2 samples");
  double st = 0.0;
  double sy = 0.0;
  for (const auto& s : samples) {
    if (!(s.gamma > 0.0)) {
      throw DomainError("fit_exponential: non-positive efficiency sample " +
                        std::to_string(s.gamma));
    }
    st += s.t_s;
    sy += std::log(s.gamma);
  }
  const double n = static_cast<double>(samples.size());
  const double t_mean = st / n;
  const double y_mean = sy / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& s : samples) {
    const double dt = s.t_s - t_mean;
    sxx += dt * dt;
    sxy += dt * (std::log(s.gamma) - y_mean);
  }
  if (!(sxx > 0.0)) throw FitError("fit_exponential: storage times are not distinct");
  const double slope = sxy / sxx;
  if (!(slope < 0.0)) throw FitError("fit_exponential: efficiency does not decay");
  DecayCurve c;
  c.gamma0 = std::exp(y_mean - slope * t_mean);
  c.tau0_s = -1.0 / slope;
  return c;
}

inline DecayCurve fit_exponential(const std::vector<DecaySample>& samples) {
  return fit_exponential(std::span<const DecaySample>(samples));
}

}  // namespace mqi
