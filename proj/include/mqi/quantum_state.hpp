#pragma once

// Two-photon polarization states: the Bell target, the isotropic noise model,
// Born-rule detector statistics and Uhlmann fidelity.
//
// Basis order is (HH, HV, VH, VV) with the Stokes photon as the first factor.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>

#include "mqi/errors.hpp"

namespace mqi {

using Complex = std::complex<double>;
using Matrix4c = Eigen::Matrix<Complex, 4, 4>;
using Ket2 = Eigen::Matrix<Complex, 2, 1>;
using Ket4 = Eigen::Matrix<Complex, 4, 1>;

inline constexpr double kHermitianTolerance = 1e-10;
inline constexpr double kTraceTolerance = 1e-10;
// Eigenvalues in [-kEigenClamp, 0) are rounding noise and clamp to zero.
inline constexpr double kEigenClamp = 1e-10;

class DensityMatrix4 {
 public:
  DensityMatrix4() : m_(Matrix4c::Identity() / 4.0) {}

  // Validates Hermiticity and unit trace; the stored matrix is the exact
  // Hermitian part of the input. Positivity is not required here (raw linear
  // inversion output may be unphysical); see is_physical().
  explicit DensityMatrix4(const Matrix4c& m) {
    const double herm_err = (m - m.adjoint()).cwiseAbs().maxCoeff();
    if (!(herm_err <= kHermitianTolerance)) {
      throw DomainError("density matrix is not Hermitian (max |M - M^dagger| = " +
                        std::to_string(herm_err) + ")");
    }
    const Complex tr = m.trace();
    if (!(std::abs(tr - Complex(1.0, 0.0)) <= kTraceTolerance)) {
      throw DomainError("density matrix trace is not 1 (trace = " + std::to_string(tr.real()) +
                        (tr.imag() != 0.0 ? " + " + std::to_string(tr.imag()) + "i" : "") + ")");
    }
    m_ = 0.5 * (m + m.adjoint());
  }

  const Matrix4c& matrix() const noexcept { return m_; }
  Complex operator()(int row, int col) const { return m_(row, col); }

  Eigen::Vector4d eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(m_, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }
  double min_eigenvalue() const { return eigenvalues().minCoeff(); }
  bool is_physical(double tol = kEigenClamp) const { return min_eigenvalue() >= -tol; }

 private:
  Matrix4c m_;
};

// ---------------------------------------------------------------------------
// Measurement settings

// Tomography basis label. The orthogonal complement is implied:
// H <-> V, D <-> A, sigma+ <-> sigma-.
enum class BasisLabel { H, D, SigmaPlus };

inline constexpr std::array<BasisLabel, 3> kBasisLabels{BasisLabel::H, BasisLabel::D,
                                                        BasisLabel::SigmaPlus};

inline std::string_view to_string(BasisLabel b) {
  switch (b) {
    case BasisLabel::H: return "H";
    case BasisLabel::D: return "D";
    case BasisLabel::SigmaPlus: return "sigma+";
  }
  return "?";
}

inline BasisLabel parse_basis_label(std::string_view s) {
  if (s == "H") return BasisLabel::H;
  if (s == "D") return BasisLabel::D;
  if (s == "sigma+" || s == "R" || s == "S+") return BasisLabel::SigmaPlus;
  throw DomainError("unknown tomography basis label '" + std::string(s) +
                    "' (expected H, D or sigma+)");
}

// A polarizing beam splitter in front of two detectors: outcome 0 is the
// transmitted port (D_1), outcome 1 the reflected port (D_2).
struct Analyzer {
  std::array<Ket2, 2> ports;

  // Linear analyzer transmitting polarization angle theta (radians from H).
  static Analyzer linear(double theta) {
    Analyzer a;
    a.ports[0] << Complex(std::cos(theta)), Complex(std::sin(theta));
    a.ports[1] << Complex(-std::sin(theta)), Complex(std::cos(theta));
    return a;
  }

  static Analyzer basis(BasisLabel label) {
    const double r = std::numbers::sqrt2 / 2.0;
    Analyzer a;
    switch (label) {
      case BasisLabel::H:
        a.ports[0] << 1.0, 0.0;
        a.ports[1] << 0.0, 1.0;
        break;
      case BasisLabel::D:
        a.ports[0] << r, r;
        a.ports[1] << r, -r;
        break;
      case BasisLabel::SigmaPlus:
        a.ports[0] << Complex(r), Complex(0.0, r);
        a.ports[1] << Complex(r), Complex(0.0, -r);
        break;
    }
    return a;
  }
};

// Analyzer configuration for one data-taking block: either linear analyzer
// angles (theta_S, theta_T) or a tomography basis pair (X, Y).
class PolarizationSetting {
 public:
  enum class Kind { Angles, Basis };

  static PolarizationSetting angles(double theta_s, double theta_t) {
    if (!std::isfinite(theta_s) || !std::isfinite(theta_t)) {
      throw DomainError("analyzer angles must be finite");
    }
    PolarizationSetting p;
    p.kind_ = Kind::Angles;
    p.theta_s_ = theta_s;
    p.theta_t_ = theta_t;
    return p;
  }
  static PolarizationSetting angles_deg(double theta_s_deg, double theta_t_deg) {
    return angles(theta_s_deg * std::numbers::pi / 180.0, theta_t_deg * std::numbers::pi / 180.0);
  }
  static PolarizationSetting basis(BasisLabel x, BasisLabel y) {
    PolarizationSetting p;
    p.kind_ = Kind::Basis;
    p.x_ = x;
    p.y_ = y;
    return p;
  }

  Kind kind() const noexcept { return kind_; }
  bool is_angles() const noexcept { return kind_ == Kind::Angles; }
  double theta_s() const noexcept { return theta_s_; }
  double theta_t() const noexcept { return theta_t_; }
  BasisLabel x() const noexcept { return x_; }
  BasisLabel y() const noexcept { return y_; }

  Analyzer stokes_analyzer() const {
    return is_angles() ? Analyzer::linear(theta_s_) : Analyzer::basis(x_);
  }
  Analyzer anti_stokes_analyzer() const {
    return is_angles() ? Analyzer::linear(theta_t_) : Analyzer::basis(y_);
  }

  std::string label() const {
    if (is_angles()) {
      return "(" + std::to_string(theta_s_ * 180.0 / std::numbers::pi) + "deg, " +
             std::to_string(theta_t_ * 180.0 / std::numbers::pi) + "deg)";
    }
    return "(" + std::string(to_string(x_)) + ", " + std::string(to_string(y_)) + ")";
  }

  friend bool operator==(const PolarizationSetting& a, const PolarizationSetting& b) {
    if (a.kind_ != b.kind_) return false;
    return a.is_angles() ? (a.theta_s_ == b.theta_s_ && a.theta_t_ == b.theta_t_)
                         : (a.x_ == b.x_ && a.y_ == b.y_);
  }

 private:
  Kind kind_ = Kind::Angles;
  double theta_s_ = 0.0;
  double theta_t_ = 0.0;
  BasisLabel x_ = BasisLabel::H;
  BasisLabel y_ = BasisLabel::H;
};

// ---------------------------------------------------------------------------
// States

inline Ket4 bell_ket(double phase = 0.0) {
  Ket4 k = Ket4::Zero();
  const double r = std::numbers::sqrt2 / 2.0;
  k(0) = r;
  k(3) = std::polar(r, phase);
  return k;
}

// |Phi><Phi| with |Phi> = (|HH> + e^{i phase}|VV>)/sqrt(2).
inline DensityMatrix4 ideal_state(double phase = 0.0) {
  const Ket4 k = bell_ket(phase);
  return DensityMatrix4(k * k.adjoint());
}

// V |Phi><Phi| + (1 - V) I/4.
inline DensityMatrix4 werner_state(double visibility, double phase = 0.0) {
  if (!(visibility >= 0.0 && visibility <= 1.0)) {
    throw DomainError("visibility must lie in [0, 1], got " + std::to_string(visibility));
  }
  const Ket4 k = bell_ket(phase);
  return DensityMatrix4(visibility * (k * k.adjoint()) +
                        (1.0 - visibility) * Matrix4c::Identity() / 4.0);
}

/// Isotropic noise with exponentially decaying visibility.
///
/// The defaults reproduce a CHSH value of 2.5 at zero delay
/// (V0 = 2.5 / 2 sqrt 2) and 2.07 after 1 ms of storage.
struct NoiseModel {
  static constexpr double kDefaultInitialVisibility = 0.8839;

  static double default_visibility_decay() {
    const double v_1ms = 2.07 / (2.0 * std::numbers::sqrt2);
    return 1e-3 / std::log(kDefaultInitialVisibility / v_1ms);
  }

  double initial_visibility = kDefaultInitialVisibility;
  double visibility_decay_s = default_visibility_decay();
  double residual_phase = 0.0;

  void validate() const {
    if (!(initial_visibility > 0.0 && initial_visibility <= 1.0)) {
      throw DomainError("initial visibility must lie in (0, 1]");
    }
    if (!(visibility_decay_s > 0.0)) throw DomainError("visibility decay constant must be > 0");
    if (!std::isfinite(residual_phase)) throw DomainError("residual phase must be finite");
  }

  double visibility(double t) const {
    if (t < 0.0) throw DomainError("storage time must be non-negative");
    if (std::isinf(visibility_decay_s)) return initial_visibility;
    return initial_visibility * std::exp(-t / visibility_decay_s);
  }

  DensityMatrix4 state_at(double t) const { return werner_state(visibility(t), residual_phase); }
};

// ---------------------------------------------------------------------------
// Measurement statistics

inline void require_physical(const DensityMatrix4& rho, const char* what) {
  const double lo = rho.min_eigenvalue();
  if (lo < -kEigenClamp) {
    throw DomainError(std::string(what) + ": state is not physical (min eigenvalue " +
                      std::to_string(lo) + ")");
  }
}

// All four outcome probabilities p[s][t] without re-validating rho.
inline std::array<std::array<double, 2>, 2> outcome_probabilities_unchecked(
    const DensityMatrix4& rho, const PolarizationSetting& setting) {
  const Analyzer a = setting.stokes_analyzer();
  const Analyzer b = setting.anti_stokes_analyzer();
  std::array<std::array<double, 2>, 2> p{};
  for (int s = 0; s < 2; ++s) {
    for (int t = 0; t < 2; ++t) {
      Ket4 k;
      k << a.ports[s](0) * b.ports[t](0), a.ports[s](0) * b.ports[t](1),
          a.ports[s](1) * b.ports[t](0), a.ports[s](1) * b.ports[t](1);
      p[s][t] = std::max(0.0, (k.adjoint() * rho.matrix() * k)(0, 0).real());
    }
  }
  return p;
}

inline std::array<std::array<double, 2>, 2> outcome_probabilities(
    const DensityMatrix4& rho, const PolarizationSetting& setting) {
  require_physical(rho, "outcome_probabilities");
  return outcome_probabilities_unchecked(rho, setting);
}

// Probability that the Stokes analyzer gives s_outcome and the anti-Stokes
// analyzer gives t_outcome (0 = transmitted port, 1 = reflected port).
inline double joint_probability(const DensityMatrix4& rho, const PolarizationSetting& setting,
                                int s_outcome, int t_outcome) {
  if ((s_outcome != 0 && s_outcome != 1) || (t_outcome != 0 && t_outcome != 1)) {
    throw DomainError("detector outcome must be 0 or 1");
  }
  return outcome_probabilities(rho, setting)[s_outcome][t_outcome];
}

// ---------------------------------------------------------------------------
// Fidelity

// Square root of a Hermitian PSD matrix by eigendecomposition.
inline Matrix4c psd_sqrt(const Matrix4c& m) {
  Eigen::SelfAdjointEigenSolver<Matrix4c> es(0.5 * (m + m.adjoint()));
  Eigen::Vector4d ev = es.eigenvalues();
  for (int i = 0; i < 4; ++i) {
    if (ev(i) < -kEigenClamp) {
      throw DomainError("matrix square root of a matrix with eigenvalue " + std::to_string(ev(i)));
    }
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

// Uhlmann fidelity F = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
inline double fidelity(const DensityMatrix4& rho, const DensityMatrix4& sigma) {
  const Matrix4c sr = psd_sqrt(rho.matrix());
  const Matrix4c inner = sr * sigma.matrix() * sr;
  Eigen::SelfAdjointEigenSolver<Matrix4c> es(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
  const Eigen::Vector4d ev = es.eigenvalues();
  // Eigenvalues at the rounding floor would otherwise add about sqrt(eps) each.
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(ev.maxCoeff(), 0.0);
  double tr = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (ev(i) > floor) tr += std::sqrt(ev(i));
  }
  return std::clamp(tr * tr, 0.0, 1.0);
}

// Checked overload for raw matrices, which may fail Hermiticity.
inline double fidelity(const Matrix4c& rho, const Matrix4c& sigma) {
  return fidelity(DensityMatrix4(rho), DensityMatrix4(sigma));
}

}  // namespace mqi
