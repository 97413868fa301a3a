#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ielkit/iel.hpp"
#include "test_util.hpp"

using namespace ielkit;
using ielkit::testing::naive_dft2;
using ielkit::testing::random_grid;

namespace {

RealGrid delta(std::size_t n) {
  RealGrid g(1, n, n);
  g(0, n / 2, n / 2) = 1.0;
  return g;
}

IelConfig periodic(int depth, double tau = 0.1) { return {depth, tau, Padding::periodic}; }

}  // namespace

TEST(Laplacian, ConstantIsInNullSpace) {
  for (Padding p : {Padding::replicate, Padding::periodic}) {
    const RealGrid out = laplacian(RealGrid(2, 5, 6, 7.0), p);
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Laplacian, DeltaStencil) {
  const RealGrid out = laplacian(delta(5), Padding::periodic);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 5; ++x) {
      const int d = std::abs(int(y) - 2) + std::abs(int(x) - 2);
      const double expect = d == 0 ? -4.0 : (d == 1 ? 1.0 : 0.0);
      EXPECT_EQ(out(0, y, x), expect);
    }
}

TEST(Laplacian, ReplicateMatchesClampedLoop) {
  const RealGrid in = random_grid(1, 6, 6, 11);
  const RealGrid out = laplacian(in, Padding::replicate);
  auto at = [&](int y, int x) { return in(0, std::clamp(y, 0, 5), std::clamp(x, 0, 5)); };
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      const double ref = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4 * at(y, x);
      EXPECT_NEAR(out(0, y, x), ref, 1e-12);
    }
}

TEST(Laplacian, IsSymmetricOperator) {
  for (Padding p : {Padding::replicate, Padding::periodic}) {
    const RealGrid u = random_grid(2, 5, 7, 12), v = random_grid(2, 5, 7, 13);
    const RealGrid lu = laplacian(u, p), lv = laplacian(v, p);
    double a = 0, b = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      a += lu[i] * v[i];
      b += u[i] * lv[i];
    }
    EXPECT_NEAR(a, b, 1e-12) << to_string(p);
  }
}

TEST(IelStep, ConstantUnchanged) {
  const RealGrid c(1, 4, 4, -3.25);
  EXPECT_EQ(iel_step(c, 0.1, Padding::replicate), c);
}

TEST(IelStep, DeltaArithmetic) {
  const RealGrid out = iel_step(delta(5), 0.1, Padding::periodic);
  EXPECT_NEAR(out(0, 2, 2), 1.4, 1e-15);
  for (auto [y, x] : {std::pair{1, 2}, {3, 2}, {2, 1}, {2, 3}}) EXPECT_NEAR(out(0, y, x), -0.1, 1e-15);
  EXPECT_EQ(out(0, 0, 0), 0.0);
}

TEST(IelStep, SinusoidModeScaling) {
  // cos(2*pi*2*y/8) sits in bins (2,0) and (6,0); one step scales them by
  // 1 + 0.1 * 4 sin^2(pi*2/8) = 1.2.
  RealGrid u(1, 8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) u(0, y, x) = std::cos(2 * std::numbers::pi * 2 * y / 8.0);
  const auto before = naive_dft2(u);
  const auto after = naive_dft2(iel_step(u, 0.1, Padding::periodic));
  EXPECT_NEAR(std::abs(after(0, 2, 0)) / std::abs(before(0, 2, 0)), 1.2, 1e-12);
  EXPECT_NEAR(1.0 + 0.1 * laplacian_symbol(2, 0, 8, 8), 1.2, 1e-15);
}

TEST(IelApply, DepthZeroIsIdentity) {
  const RealGrid u = random_grid(2, 6, 6, 14);
  EXPECT_EQ(iel_apply(u, {0, 0.1, Padding::replicate}), u);
}

TEST(IelApply, ConstantUnchangedBothBoundaries) {
  const RealGrid c(2, 6, 6, 0.3);
  EXPECT_EQ(iel_apply(c, {5, 0.1, Padding::replicate}), c);
  EXPECT_EQ(iel_apply(c, periodic(5)), c);
}

TEST(IelApply, PerModePowerLaw) {
  const RealGrid u = random_grid(1, 8, 8, 15);
  const auto su = naive_dft2(u);
  const auto sv = naive_dft2(iel_apply(u, periodic(5)));
  double worst = 0;
  for (std::size_t k = 0; k < 8; ++k)
    for (std::size_t l = 0; l < 8; ++l) {
      const Complex expect = su(0, k, l) * std::pow(1.0 + 0.1 * laplacian_symbol(k, l, 8, 8), 5);
      worst = std::max(worst, std::abs(sv(0, k, l) - expect) / std::abs(expect));
    }
  EXPECT_LT(worst, 1e-8);
}

TEST(IelApply, RejectsBadConfig) {
  const RealGrid u(1, 4, 4);
  EXPECT_THROW(iel_apply(u, {-1, 0.1, Padding::periodic}), ConfigError);
  EXPECT_THROW(iel_apply(u, {65, 0.1, Padding::periodic}), ConfigError);
  EXPECT_THROW(iel_apply(u, {1, 0.0, Padding::periodic}), ConfigError);
  EXPECT_THROW(iel_apply(u, {1, 0.6, Padding::periodic}), ConfigError);
  EXPECT_THROW(iel_apply(u, {1, 0.1, Padding::zero}), ConfigError);
}

TEST(IelApply, Linearity) {
  for (Padding p : {Padding::replicate, Padding::periodic}) {
    const IelConfig cfg{5, 0.1, p};
    const RealGrid u = random_grid(2, 8, 8, 16), v = random_grid(2, 8, 8, 17);
    const RealGrid lhs = iel_apply(0.7 * u + (-1.3) * v, cfg);
    const RealGrid rhs = 0.7 * iel_apply(u, cfg) + (-1.3) * iel_apply(v, cfg);
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-10);
  }
}

TEST(IelApply, DefectAmplification) {
  RealGrid clean(1, 8, 8, 0.0);
  for (std::size_t y = 2; y < 6; ++y)
    for (std::size_t x = 2; x < 6; ++x) clean(0, y, x) = 1.0;
  RealGrid holed = clean;
  holed(0, 3, 3) = 0.0;
  const IelConfig cfg = periodic(5);
  const double before = max_abs_diff(clean, holed);
  const double after = max_abs_diff(iel_apply(clean, cfg), iel_apply(holed, cfg));
  EXPECT_EQ(before, 1.0);
  EXPECT_GT(after, before);
}

TEST(IelMultiplier, StrictlyIncreasingInDepthForNonDcModes) {
  for (std::size_t k = 0; k < 8; ++k)
    for (std::size_t l = 0; l < 8; ++l) {
      const double s = laplacian_symbol(k, l, 8, 8);
      for (int d = 0; d < 20; ++d) {
        const double m0 = iel_multiplier(k, l, 8, 8, periodic(d));
        const double m1 = iel_multiplier(k, l, 8, 8, periodic(d + 1));
        if (k == 0 && l == 0) {
          EXPECT_EQ(m0, 1.0);
          EXPECT_EQ(m1, 1.0);
        } else {
          EXPECT_GT(s, 0.0);
          EXPECT_GT(m1, m0);
        }
      }
    }
}

TEST(IelSpectralOracle, IdentityCases) {
  const RealGrid u = random_grid(1, 8, 8, 18);
  EXPECT_EQ(iel_spectral_oracle(u, periodic(0)), u);
  const RealGrid c(1, 8, 8, 2.0);
  EXPECT_LT(max_abs_diff(iel_spectral_oracle(c, periodic(5)), c), 1e-14);
}

TEST(IelSpectralOracle, AgreesWithStencil) {
  const RealGrid u = random_grid(2, 16, 16, 19);
  EXPECT_LT(max_abs_diff(iel_spectral_oracle(u, periodic(5)), iel_apply(u, periodic(5))), 1e-8);
}

TEST(IelSpectralOracle, ReplicateUnsupported) {
  const RealGrid u(1, 4, 4);
  EXPECT_THROW(iel_spectral_oracle(u, {2, 0.1, Padding::replicate}), DomainError);
}

TEST(IelBackward, AdjointIdentity) {
  const IelConfig cfg{4, 0.1, Padding::replicate};
  const RealGrid u = random_grid(2, 6, 8, 20), g = random_grid(2, 6, 8, 21);
  const RealGrid fu = iel_apply(u, cfg), bg = iel_backward(g, cfg);
  double a = 0, b = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    a += fu[i] * g[i];
    b += u[i] * bg[i];
  }
  EXPECT_NEAR(a, b, 1e-9 * std::abs(a));
}
