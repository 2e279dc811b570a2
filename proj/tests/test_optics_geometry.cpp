#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mqi/optics_geometry.hpp"

using namespace mqi;

namespace {

// Plain 2x2 product written out independently of RayMatrix::operator*.
struct M2 {
  double e[2][2];
};
M2 mul(const M2& l, const M2& r) {
  M2 o{};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) o.e[i][j] += l.e[i][k] * r.e[k][j];
    }
  }
  return o;
}
M2 lens(double f) { return {{{1.0, 0.0}, {-1.0 / f, 1.0}}}; }
M2 gap(double d) { return {{{1.0, d}, {0.0, 1.0}}}; }

void expect_matrix(const RayMatrix& m, double a, double b, double c, double d, double tol) {
  EXPECT_NEAR(m.a, a, tol);
  EXPECT_NEAR(m.b, b, tol);
  EXPECT_NEAR(m.c, c, tol);
  EXPECT_NEAR(m.d, d, tol);
}

}  // namespace

TEST(ModeAngle, DefaultArray) {
  const ArrayGeometry g;
  EXPECT_NEAR(mode_angle(2, g), 7.02e-4, 0.01e-4);
  EXPECT_NEAR(rad_to_deg(mode_angle(2, g)), 0.040, 0.0005);
  EXPECT_NEAR(mode_angle(1, g), 1.569e-3, 0.001e-3);
  EXPECT_NEAR(rad_to_deg(mode_angle(1, g)), 0.090, 0.0005);
  EXPECT_EQ(mode_angle(3, g), mode_angle(1, g));
}

TEST(ModeAngle, MatchesClosedFormForThreeChannels) {
  for (double bf : {1e-3, 2e-3, 4e-3}) {
    for (double f : {0.5, 1.425, 3.0}) {
      ArrayGeometry g;
      g.beam_separation_m = bf;
      g.focal_length_m = f;
      for (int i = 1; i <= 3; ++i) {
        const double closed = std::sqrt(4.0 * (i - 2) * (i - 2) + 1.0) * bf / (2.0 * f);
        EXPECT_NEAR(mode_angle(i, g), closed, 1e-15);
      }
      EXPECT_LT(mode_angle(2, g), mode_angle(1, g));
    }
  }
}

TEST(ModeAngle, RejectsBadChannelAndGeometry) {
  ArrayGeometry g;
  EXPECT_THROW(mode_angle(0, g), DomainError);
  EXPECT_THROW(mode_angle(4, g), DomainError);
  g.focal_length_m = 0.0;
  EXPECT_THROW(mode_angle(1, g), DomainError);
  ArrayGeometry bad;
  bad.rows = 2;
  bad.cols = 2;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(ModeAngle, ScaleUpGridHas65Channels) {
  ArrayGeometry g;
  g.channel_count = 65;
  g.rows = 13;
  g.cols = 10;
  g.validate();
  for (int i = 1; i <= 65; ++i) {
    const double a = mode_angle(i, g);
    EXPECT_GT(a, 0.0);
    EXPECT_LT(a, 0.02);
  }
  // Corner channel sits farthest from the axis: column offset 4.5 pitches,
  // row offset 6 pitches.
  EXPECT_NEAR(mode_angle(1, g), std::hypot(4.5, 6.0) * 2e-3 / 1.425, 1e-15);
}

TEST(ModeAngle, SmallAngleWarning) {
  ArrayGeometry g;
  EXPECT_FALSE(g.small_angle_warning());
  g.beam_separation_m = 0.2;
  g.focal_length_m = 1.0;
  EXPECT_TRUE(g.small_angle_warning());
}

TEST(SpinWavelength, Examples) {
  EXPECT_NEAR(spin_wavelength(1.571e-3, 795e-9), 5.06e-4, 0.005e-4);
  const double kw = 2.0 * std::numbers::pi / 795e-9;
  EXPECT_NEAR(spin_wavelength(1.571e-3, 795e-9), 2.0 * std::numbers::pi / (kw * 1.571e-3), 1e-15);
  EXPECT_DOUBLE_EQ(spin_wavelength(0.5, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(spin_wavelength(2e-3, 795e-9), spin_wavelength(1e-3, 795e-9) / 2.0);
  EXPECT_THROW(spin_wavelength(0.0, 795e-9), DomainError);
  EXPECT_THROW(spin_wavelength(-1e-3, 795e-9), DomainError);
}

TEST(Btd, PrintedMatrices) {
  expect_matrix(btd_matrix(2.0, 2.0, BtdDirection::Shrink), 0.5, 1.0, 0.0, 2.0, 0.0);
  expect_matrix(btd_matrix(2.0, 2.0, BtdDirection::Expand), 2.0, 1.0, 0.0, 0.5, 0.0);
  expect_matrix(btd_matrix_product(2.0, 2.0, BtdDirection::Shrink), 0.5, 1.0, 0.0, 2.0, 1e-15);
  expect_matrix(btd_matrix_product(2.0, 2.0, BtdDirection::Expand), 2.0, 1.0, 0.0, 0.5, 1e-15);
}

TEST(Btd, UnitFactorIsIdentity) {
  for (auto dir : {BtdDirection::Shrink, BtdDirection::Expand}) {
    EXPECT_EQ(btd_matrix(1.7, 1.0, dir), RayMatrix::identity());
    expect_matrix(btd_matrix_product(1.7, 1.0, dir), 1.0, 0.0, 0.0, 1.0, 1e-15);
  }
}

TEST(Btd, RejectsNonPositiveArgs) {
  EXPECT_THROW(btd_matrix(0.0, 2.0, BtdDirection::Shrink), DomainError);
  EXPECT_THROW(btd_matrix(2.0, -1.0, BtdDirection::Expand), DomainError);
  EXPECT_THROW(btd_matrix_product(-2.0, 2.0, BtdDirection::Expand), DomainError);
}

TEST(Btd, ClosedFormMatchesHandProductOnRandomGrid) {
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> fl(0.05, 5.0);
  std::uniform_real_distribution<double> ff(0.2, 8.0);
  for (int n = 0; n < 100; ++n) {
    const double f = fl(gen);
    const double F = ff(gen);
    const double sep = (1.0 - 1.0 / F) * f;
    const M2 shrink = mul(mul(lens(-f / F), gap(sep)), lens(f));
    const M2 expand = mul(mul(lens(f), gap(sep)), lens(-f / F));
    const RayMatrix s = btd_matrix(f, F, BtdDirection::Shrink);
    const RayMatrix e = btd_matrix(f, F, BtdDirection::Expand);
    expect_matrix(s, shrink.e[0][0], shrink.e[0][1], shrink.e[1][0], shrink.e[1][1], 1e-12);
    expect_matrix(e, expand.e[0][0], expand.e[0][1], expand.e[1][0], expand.e[1][1], 1e-12);
    const RayMatrix sp = btd_matrix_product(f, F, BtdDirection::Shrink);
    expect_matrix(sp, s.a, s.b, s.c, s.d, 1e-12);
    EXPECT_NEAR(s.det(), 1.0, 1e-12);
    EXPECT_NEAR(e.det(), 1.0, 1e-12);
    const RayMatrix round = e * s;
    EXPECT_NEAR(round.a * round.d, 1.0, 1e-12);
  }
}

TEST(SpotCheck, DefaultArrayFitsInsideAtoms) {
  const auto r = array_spot_check(ArrayGeometry{}, kDefaultFocusedSpotM);
  EXPECT_DOUBLE_EQ(r.spot_at_center_m, 0.65e-3);
  EXPECT_FALSE(r.exceeds_atomic_size);
  EXPECT_LT(r.envelope_m, 1e-3);
}

TEST(SpotCheck, ZeroSeparationPassesThrough) {
  ArrayGeometry g;
  g.beam_separation_m = 0.0;
  const auto r = array_spot_check(g, 0.4e-3);
  EXPECT_DOUBLE_EQ(r.envelope_m, 0.4e-3);
}

TEST(SpotCheck, OversizedSpotFlagged) {
  const auto r = array_spot_check(ArrayGeometry{}, 2.5e-3);
  EXPECT_TRUE(r.exceeds_atomic_size);
  EXPECT_THROW(array_spot_check(ArrayGeometry{}, 0.0), DomainError);
}
