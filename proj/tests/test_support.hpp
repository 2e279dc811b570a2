#pragma once

// Independent reference computations used as oracles by the unit tests. They
// avoid the library's code paths: plain loops over std::complex instead of
// the measurement and fidelity routines under test.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <complex>
#include <random>

#include "mqi/quantum_state.hpp"

namespace oracle {

using C = std::complex<double>;
using Mat4 = std::array<std::array<C, 4>, 4>;

inline Mat4 to_array(const mqi::DensityMatrix4& rho) {
  Mat4 m{};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m[r][c] = rho(r, c);
  }
  return m;
}

// Analyzer port vector written out by hand: port 0 transmits polarization at
// angle theta, port 1 the orthogonal one.
inline std::array<C, 2> linear_port(double theta, int port) {
  if (port == 0) return {C(std::cos(theta)), C(std::sin(theta))};
  return {C(-std::sin(theta)), C(std::cos(theta))};
}

inline std::array<C, 2> basis_port(mqi::BasisLabel b, int port) {
  const double s = 1.0 / std::sqrt(2.0);
  switch (b) {
    case mqi::BasisLabel::H: return port == 0 ? std::array<C, 2>{1.0, 0.0} : std::array<C, 2>{0.0, 1.0};
    case mqi::BasisLabel::D: return port == 0 ? std::array<C, 2>{s, s} : std::array<C, 2>{s, -s};
    case mqi::BasisLabel::SigmaPlus:
      return port == 0 ? std::array<C, 2>{s, C(0, s)} : std::array<C, 2>{s, C(0, -s)};
  }
  return {};
}

// <a (x) b| rho |a (x) b> by explicit contraction over all 16 index pairs.
inline double projector_probability(const Mat4& rho, const std::array<C, 2>& a,
                                    const std::array<C, 2>& b) {
  std::array<C, 4> k{a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]};
  C sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) sum += std::conj(k[i]) * rho[i][j] * k[j];
  }
  return sum.real();
}

inline double linear_probability(const mqi::DensityMatrix4& rho, double ts, double tt, int s, int t) {
  return projector_probability(to_array(rho), linear_port(ts, s), linear_port(tt, t));
}

// Uhlmann fidelity through the spectrum of the non-Hermitian product rho*sigma:
// F = (sum_i sqrt(lambda_i))^2.
inline double fidelity_via_product(const mqi::Matrix4c& rho, const mqi::Matrix4c& sigma) {
  Eigen::ComplexEigenSolver<mqi::Matrix4c> es(rho * sigma);
  double top = 0.0;
  for (int i = 0; i < 4; ++i) top = std::max(top, std::abs(es.eigenvalues()(i)));
  // Eigenvalues of a rank-deficient product sit at the rounding floor.
  const double floor = 1e3 * std::numeric_limits<double>::epsilon() * top;
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double l = es.eigenvalues()(i).real();
    if (l > floor) s += std::sqrt(l);
  }
  return s * s;
}

// Overlap with a pure target <psi|rho|psi>.
inline double pure_overlap(const mqi::DensityMatrix4& rho, const std::array<C, 4>& psi) {
  const auto m = to_array(rho);
  C sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) sum += std::conj(psi[i]) * m[i][j] * psi[j];
  }
  return sum.real();
}

inline std::array<C, 4> phi_plus() {
  const double s = 1.0 / std::sqrt(2.0);
  return {s, 0.0, 0.0, s};
}

// Random full-rank physical state G G^dagger / tr.
inline mqi::DensityMatrix4 random_state(std::mt19937_64& gen, int rank = 4) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Matrix<mqi::Complex, 4, Eigen::Dynamic> g(4, rank);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < rank; ++c) g(r, c) = mqi::Complex(n(gen), n(gen));
  }
  mqi::Matrix4c rho = g * g.adjoint();
  rho /= rho.trace().real();
  return mqi::DensityMatrix4(0.5 * (rho + rho.adjoint()));
}

inline double max_abs_diff(const mqi::Matrix4c& a, const mqi::Matrix4c& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace oracle
