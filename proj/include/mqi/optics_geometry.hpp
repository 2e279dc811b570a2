#pragma once

// Beam-array geometry of the polarization interferometer.
//
// The array on lens L1 is a rectangular grid of beams with pitch B_f centred
// on the write axis. Each optical channel owns two horizontally adjacent
// beams (its H and V arms). The standard layout is `channel_count` rows by
// two columns, for which a beam in row i sits at distance
// sqrt(4 (i - 2)^2 + 1) B_f / 2 from the axis when there are three rows.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mqi/errors.hpp"

namespace mqi {

struct ArrayGeometry {
  int channel_count = 3;
  double beam_separation_m = 2e-3;  // pitch of the array on L1, after BTD1
  double focal_length_m = 1.425;
  double write_wavelength_m = 795e-9;
  // Beam grid. rows * cols must equal 2 * channel_count. Zero means the
  // standard (channel_count x 2) layout.
  int rows = 0;
  int cols = 0;

  int grid_rows() const { return rows > 0 ? rows : channel_count; }
  int grid_cols() const { return cols > 0 ? cols : 2; }

  void validate() const {
    if (channel_count < 1) throw DomainError("channel_count must be >= 1");
    if (!(beam_separation_m >= 0.0)) throw DomainError("beam separation must be >= 0");
    if (!(focal_length_m > 0.0)) throw DomainError("focal length must be > 0");
    if (!(write_wavelength_m > 0.0)) throw DomainError("write wavelength must be > 0");
    if (grid_rows() < 1 || grid_cols() < 2 || grid_cols() % 2 != 0) {
      throw DomainError("beam grid needs >= 1 row and an even number (>= 2) of columns");
    }
    if (grid_rows() * grid_cols() != 2 * channel_count) {
      throw DomainError("beam grid " + std::to_string(grid_rows()) + "x" +
                        std::to_string(grid_cols()) + " does not hold " +
                        std::to_string(channel_count) + " two-arm channels");
    }
  }

  // Paraxial formulas assume B_f << f.
  bool small_angle_warning() const { return beam_separation_m / focal_length_m > 0.1; }
};

// Angle between the write axis and the beam at grid position (row, col),
// both zero-based: distance from axis over f.
inline double beam_angle(int row, int col, const ArrayGeometry& geom) {
  geom.validate();
  if (row < 0 || row >= geom.grid_rows() || col < 0 || col >= geom.grid_cols()) {
    throw DomainError("beam position out of range");
  }
  const double x = (col - (geom.grid_cols() - 1) / 2.0) * geom.beam_separation_m;
  const double y = (row - (geom.grid_rows() - 1) / 2.0) * geom.beam_separation_m;
  return std::hypot(x, y) / geom.focal_length_m;
}

// Channels are numbered 1..m row-major; channel i occupies columns
// (2k, 2k + 1) of its row.
inline std::array<double, 2> arm_angles(int channel, const ArrayGeometry& geom) {
  geom.validate();
  if (channel < 1 || channel > geom.channel_count) {
    throw DomainError("channel index " + std::to_string(channel) + " outside 1.." +
                      std::to_string(geom.channel_count));
  }
  const int pairs_per_row = geom.grid_cols() / 2;
  const int row = (channel - 1) / pairs_per_row;
  const int col = 2 * ((channel - 1) % pairs_per_row);
  return {beam_angle(row, col, geom), beam_angle(row, col + 1, geom)};
}

/// Angle of channel `channel` (1-based) relative to the write beam, in radians.
/// For the standard 3 x 2 layout this is sqrt(4 (i - 2)^2 + 1) B_f / (2 f).
/// When the two arms differ (wide grids) the larger angle is returned, since
/// it bounds the qubit's motional lifetime.
inline double mode_angle(int channel, const ArrayGeometry& geom) {
  const auto a = arm_angles(channel, geom);
  return std::max(a[0], a[1]);
}

// Spin-wave wavelength 2 pi / (k_w theta) = lambda_w / theta.
inline double spin_wavelength(double theta, double write_wavelength_m) {
  if (!(theta > 0.0)) {
    throw DomainError("spin_wavelength: angle must be > 0 (collinear storage has no finite "
                      "spin-wave wavelength)");
  }
  if (!(write_wavelength_m > 0.0)) throw DomainError("write wavelength must be > 0");
  return write_wavelength_m / theta;
}

// ---------------------------------------------------------------------------
// Ray-transfer matrices

struct RayMatrix {
  double a = 1.0;
  double b = 0.0;  // meters
  double c = 0.0;  // 1/meters
  double d = 1.0;

  double det() const { return a * d - b * c; }

  friend RayMatrix operator*(const RayMatrix& l, const RayMatrix& r) {
    return {l.a * r.a + l.b * r.c, l.a * r.b + l.b * r.d, l.c * r.a + l.d * r.c,
            l.c * r.b + l.d * r.d};
  }
  friend bool operator==(const RayMatrix&, const RayMatrix&) = default;

  static RayMatrix identity() { return {}; }
  static RayMatrix free_space(double distance_m) { return {1.0, distance_m, 0.0, 1.0}; }
  static RayMatrix thin_lens(double focal_m) {
    if (focal_m == 0.0) throw DomainError("thin lens focal length must be non-zero");
    return {1.0, 0.0, -1.0 / focal_m, 1.0};
  }
};

enum class BtdDirection { Shrink, Expand };

inline void check_btd_args(double f_lens_m, double factor) {
  if (!(f_lens_m > 0.0)) throw DomainError("BTD focal length f_L must be > 0");
  if (!(factor > 0.0)) throw DomainError("BTD factor F must be > 0");
}

// Closed form of the two-lens telescope: convex f_L and concave -f_L/F
// separated by (1 - 1/F) f_L.
inline RayMatrix btd_matrix(double f_lens_m, double factor, BtdDirection direction) {
  check_btd_args(f_lens_m, factor);
  const double sep = (1.0 - 1.0 / factor) * f_lens_m;
  if (direction == BtdDirection::Shrink) return {1.0 / factor, sep, 0.0, factor};
  return {factor, sep, 0.0, 1.0 / factor};
}

// The same device as an explicit product of thin-lens and free-space
// matrices (rightmost element is traversed first).
inline RayMatrix btd_matrix_product(double f_lens_m, double factor, BtdDirection direction) {
  check_btd_args(f_lens_m, factor);
  const RayMatrix convex = RayMatrix::thin_lens(f_lens_m);
  const RayMatrix gap = RayMatrix::free_space((1.0 - 1.0 / factor) * f_lens_m);
  const RayMatrix concave = RayMatrix::thin_lens(-f_lens_m / factor);
  return direction == BtdDirection::Shrink ? concave * gap * convex : convex * gap * concave;
}

// ---------------------------------------------------------------------------
// Focused spot

inline constexpr double kDefaultFocusedSpotM = 0.65e-3;
inline constexpr double kDefaultAtomicTransverseSizeM = 2e-3;

struct SpotReport {
  double spot_at_center_m = 0.0;
  // Array envelope over the ensemble length: the beams cross at the focus
  // and walk off by angle * (length / 2) at the ensemble ends.
  double envelope_m = 0.0;
  double atomic_size_m = kDefaultAtomicTransverseSizeM;
  bool exceeds_atomic_size = false;
};

/// Geometric focusing report. `beam_spot_m` is the single-beam spot at the
/// focus (the optics needed to derive it are not modelled). All beam centres
/// meet on axis at the focal plane, so the array extent at the centre equals
/// the single-beam spot.
inline SpotReport array_spot_check(const ArrayGeometry& geom, double beam_spot_m,
                                   double ensemble_length_m = 5e-3,
                                   double atomic_size_m = kDefaultAtomicTransverseSizeM) {
  geom.validate();
  if (!(beam_spot_m > 0.0) || !(atomic_size_m > 0.0) || !(ensemble_length_m >= 0.0)) {
    throw DomainError("spot check needs positive spot and atomic sizes");
  }
  double max_angle = 0.0;
  for (int i = 1; i <= geom.channel_count; ++i) max_angle = std::max(max_angle, mode_angle(i, geom));
  SpotReport r;
  r.spot_at_center_m = beam_spot_m;
  r.envelope_m = beam_spot_m + 2.0 * max_angle * ensemble_length_m / 2.0;
  r.atomic_size_m = atomic_size_m;
  r.exceeds_atomic_size = r.envelope_m > atomic_size_m;
  return r;
}

inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }
inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace mqi
