#pragma once

// Two-photon polarization tomography from the 36 coincidence numbers of the
// nine (X, Y) analyzer settings, X, Y in {H, D, sigma+}: linear inversion by
// least squares, eigenvalue redistribution onto the physical set, and
// fidelity against the Bell target.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mqi/analysis.hpp"
#include "mqi/coincidence_table.hpp"
#include "mqi/errors.hpp"
#include "mqi/quantum_state.hpp"

namespace mqi {

/// Coincidences for the nine basis pairs. Group g = 3 * index(X) + index(Y)
/// holds {C(X,Y), C(X,Y'), C(X',Y), C(X',Y')}, i.e. detector pairs
/// (D_S1,D_T1), (D_S1,D_T2), (D_S2,D_T1), (D_S2,D_T2).
struct TomographyCounts {
  std::array<std::array<double, 4>, 9> groups{};

  static constexpr int group_index(BasisLabel x, BasisLabel y) {
    return 3 * static_cast<int>(x) + static_cast<int>(y);
  }
  std::array<double, 4>& operator()(BasisLabel x, BasisLabel y) { return groups[group_index(x, y)]; }
  const std::array<double, 4>& operator()(BasisLabel x, BasisLabel y) const {
    return groups[group_index(x, y)];
  }

  TomographyCounts& operator+=(const TomographyCounts& o) {
    for (int g = 0; g < 9; ++g) {
      for (int k = 0; k < 4; ++k) groups[g][k] += o.groups[g][k];
    }
    return *this;
  }

  void validate() const {
    for (const auto& g : groups) {
      for (double c : g) {
        if (!(c >= 0.0)) throw DomainError("tomography counts must be non-negative");
      }
    }
  }
};

// Expected counts (probabilities times `total_per_group`) of a state.
inline TomographyCounts tomography_expected_counts(const DensityMatrix4& rho,
                                                   double total_per_group = 1.0) {
  TomographyCounts c;
  for (BasisLabel x : kBasisLabels) {
    for (BasisLabel y : kBasisLabels) {
      const auto p = outcome_probabilities_unchecked(rho, PolarizationSetting::basis(x, y));
      c(x, y) = {p[0][0] * total_per_group, p[0][1] * total_per_group,
                 p[1][0] * total_per_group, p[1][1] * total_per_group};
    }
  }
  return c;
}

namespace detail {

inline const std::array<Eigen::Matrix2cd, 4>& paulis() {
  static const std::array<Eigen::Matrix2cd, 4> p = [] {
    std::array<Eigen::Matrix2cd, 4> m;
    m[0] << 1, 0, 0, 1;
    m[1] << 0, 1, 1, 0;
    m[2] << 0, Complex(0, -1), Complex(0, 1), 0;
    m[3] << 1, 0, 0, -1;
    return m;
  }();
  return p;
}

inline Matrix4c kron(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
  Matrix4c k;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) k.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  }
  return k;
}

// Pauli products sigma_a (x) sigma_b for (a, b) != (0, 0), 15 of them.
inline const std::array<Matrix4c, 15>& pauli_products() {
  static const std::array<Matrix4c, 15> prods = [] {
    std::array<Matrix4c, 15> out;
    int n = 0;
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        if (a == 0 && b == 0) continue;
        out[static_cast<std::size_t>(n++)] = kron(paulis()[a], paulis()[b]);
      }
    }
    return out;
  }();
  return prods;
}

// Projector for row k = 4 * group + outcome.
inline Matrix4c projector(int row) {
  const int g = row / 4;
  const int outcome = row % 4;
  const auto x = kBasisLabels[static_cast<std::size_t>(g / 3)];
  const auto y = kBasisLabels[static_cast<std::size_t>(g % 3)];
  const Ket2 a = Analyzer::basis(x).ports[static_cast<std::size_t>(outcome / 2)];
  const Ket2 b = Analyzer::basis(y).ports[static_cast<std::size_t>(outcome % 2)];
  Ket4 k;
  k << a(0) * b(0), a(0) * b(1), a(1) * b(0), a(1) * b(1);
  return k * k.adjoint();
}

struct InversionSystem {
  Eigen::Matrix<double, 36, 15> design;
  Eigen::Matrix<double, 15, 36> pseudo_inverse;
  int rank = 0;
};

// p_k - 1/4 = sum_j r_j Tr(P_j Pi_k) / 4 with rho = (I + sum_j r_j P_j) / 4.
inline const InversionSystem& inversion_system() {
  static const InversionSystem sys = [] {
    InversionSystem s;
    for (int k = 0; k < 36; ++k) {
      const Matrix4c pi = projector(k);
      for (int j = 0; j < 15; ++j) {
        s.design(k, j) = (pauli_products()[static_cast<std::size_t>(j)] * pi).trace().real() / 4.0;
      }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(s.design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    s.rank = static_cast<int>(svd.rank());
    Eigen::VectorXd inv = svd.singularValues();
    for (int i = 0; i < inv.size(); ++i) inv(i) = i < s.rank ? 1.0 / inv(i) : 0.0;
    s.pseudo_inverse = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    return s;
  }();
  return sys;
}

}  // namespace detail

/// Least-squares linear inversion. The result is Hermitian with unit trace but
/// may have negative eigenvalues.
inline DensityMatrix4 linear_inversion(const TomographyCounts& counts) {
  counts.validate();
  const auto& sys = detail::inversion_system();
  if (sys.rank < 15) {
    throw ReconstructionError("tomography design matrix is rank deficient (rank " +
                              std::to_string(sys.rank) + ")");
  }
  Eigen::Matrix<double, 36, 1> rhs;
  for (int g = 0; g < 9; ++g) {
    double total = 0.0;
    for (double c : counts.groups[g]) total += c;
    if (!(total > 0.0)) {
      throw ReconstructionError("tomography setting group " + std::to_string(g) +
                                " has no counts");
    }
    for (int k = 0; k < 4; ++k) rhs(4 * g + k) = counts.groups[g][k] / total - 0.25;
  }
  const Eigen::Matrix<double, 15, 1> r = sys.pseudo_inverse * rhs;
  Matrix4c rho = Matrix4c::Identity();
  for (int j = 0; j < 15; ++j) rho += r(j) * detail::pauli_products()[static_cast<std::size_t>(j)];
  return DensityMatrix4(rho / 4.0);
}

/// Closest physical state in the input's eigenbasis: negative eigenvalues are
/// zeroed one at a time from the bottom and their deficit is spread evenly
/// over the remaining ones.
inline DensityMatrix4 project_physical(const DensityMatrix4& rho) {
  Eigen::SelfAdjointEigenSolver<Matrix4c> es(rho.matrix());
  Eigen::Vector4d lambda = es.eigenvalues();  // ascending
  if (lambda.minCoeff() >= 0.0) return rho;
  const double trace = lambda.sum();
  if (trace > 0.0) lambda /= trace;

  // Walk from the smallest eigenvalue upward.
  std::array<double, 4> desc{lambda(3), lambda(2), lambda(1), lambda(0)};
  double deficit = 0.0;
  int keep = 4;
  while (keep > 0 && desc[static_cast<std::size_t>(keep - 1)] + deficit / keep < 0.0) {
    deficit += desc[static_cast<std::size_t>(keep - 1)];
    desc[static_cast<std::size_t>(keep - 1)] = 0.0;
    --keep;
  }
  for (int i = 0; i < keep; ++i) desc[static_cast<std::size_t>(i)] += deficit / keep;
  const Eigen::Vector4d fixed(desc[3], desc[2], desc[1], desc[0]);
  const double norm = fixed.sum();
  const Matrix4c out = es.eigenvectors() * (fixed / norm).cast<Complex>().asDiagonal() *
                       es.eigenvectors().adjoint();
  return DensityMatrix4(0.5 * (out + out.adjoint()));
}

struct ReconstructionResult {
  DensityMatrix4 rho;
  EstimateWithError fidelity_vs_ideal;
  bool pooled = true;
  int channel = 0;  // 1-based when !pooled
};

// Linear inversion followed by physical projection.
inline DensityMatrix4 reconstruct_state(const TomographyCounts& counts) {
  return project_physical(linear_inversion(counts));
}

// Packs tomography counts as a one-channel table with nine basis blocks so
// the generic Poisson bootstrap applies.
inline ExpectedCountTable to_table(const TomographyCounts& counts) {
  ExpectedCountTable t(1);
  for (BasisLabel x : kBasisLabels) {
    for (BasisLabel y : kBasisLabels) {
      const auto id = t.add_setting({PolarizationSetting::basis(x, y), 0.0, 0});
      auto& c = t.at(id, 1);
      const auto& g = counts(x, y);
      c.s1t1 = g[0];
      c.s1t2 = g[1];
      c.s2t1 = g[2];
      c.s2t2 = g[3];
    }
  }
  return t;
}

/// Tomography counts from basis-setting blocks of a coincidence table,
/// pooled over the selected channels (all channels when empty).
template <class Count>
TomographyCounts tomography_counts(const BasicCoincidenceTable<Count>& table,
                                   const Selection& sel = {}) {
  TomographyCounts out;
  for (BasisLabel x : kBasisLabels) {
    for (BasisLabel y : kBasisLabels) {
      const auto ids = table.find_basis(x, y, sel.storage_time_s);
      if (ids.empty()) {
        throw ReconstructionError("missing tomography setting (" + std::string(to_string(x)) +
                                  ", " + std::string(to_string(y)) + ")");
      }
      auto& g = out(x, y);
      for (auto id : ids) {
        const auto c = table.total(id, sel.channels);
        g[0] += static_cast<double>(c.s1t1);
        g[1] += static_cast<double>(c.s1t2);
        g[2] += static_cast<double>(c.s2t1);
        g[3] += static_cast<double>(c.s2t2);
      }
    }
  }
  return out;
}

/// Full pipeline with a Poisson-bootstrap error on the fidelity.
inline ReconstructionResult reconstruct(const TomographyCounts& counts,
                                        const BootstrapOptions& boot = {},
                                        const DensityMatrix4& target = ideal_state()) {
  ReconstructionResult r{reconstruct_state(counts), {}, true, 0};
  r.fidelity_vs_ideal.value = fidelity(r.rho, target);
  auto estimator = [&](const ExpectedCountTable& t) {
    TomographyCounts c;
    for (std::size_t id = 0; id < t.setting_count(); ++id) {
      const auto& s = t.block(id).setting;
      const auto& d = t.at(id, 1);
      c(s.x(), s.y()) = {d.s1t1, d.s1t2, d.s2t1, d.s2t2};
    }
    try {
      return fidelity(reconstruct_state(c), target);
    } catch (const ReconstructionError& e) {
      throw EstimationError(e.what());
    }
  };
  r.fidelity_vs_ideal.sigma = poisson_bootstrap(to_table(counts), estimator, boot);
  return r;
}

template <class Count>
ReconstructionResult reconstruct_channel(const BasicCoincidenceTable<Count>& table, int channel,
                                         const BootstrapOptions& boot = {},
                                         std::optional<double> storage_time_s = {}) {
  auto r = reconstruct(tomography_counts(table, Selection{{channel}, storage_time_s}), boot);
  r.pooled = false;
  r.channel = channel;
  return r;
}

}  // namespace mqi
