#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ielkit/mff.hpp"
#include "oracles.hpp"

using namespace ielkit;
using namespace ielkit::testing;

TEST(Decompose, ClosedForms) {
  ComplexSpectrum s(1, 1, 2);
  s[0] = {3.0, 4.0};
  s[1] = {0.0, 0.0};
  const auto ap = decompose(s);
  EXPECT_DOUBLE_EQ(ap.amplitude[0], 5.0);
  EXPECT_NEAR(ap.phase[0], 0.92730, 1e-5);
  EXPECT_EQ(ap.amplitude[1], 0.0);
  EXPECT_EQ(ap.phase[1], 0.0);
}

TEST(Decompose, NegativeRealAxisMapsToPi) {
  ComplexSpectrum s(1, 1, 2);
  s[0] = {-2.0, 0.0};
  s[1] = {-2.0, -0.0};
  const auto ap = decompose(s);
  EXPECT_EQ(ap.phase[0], std::numbers::pi);
  EXPECT_EQ(ap.phase[1], std::numbers::pi);
}

TEST(Decompose, PolarRoundTrip) {
  const ComplexSpectrum s = random_spectrum(2, 6, 6, 40);
  EXPECT_LT(max_abs_diff(recompose(decompose(s)), s), 1e-12);
}

TEST(Recompose, ClosedForms) {
  AmplitudePhase ap{RealGrid(1, 1, 2), RealGrid(1, 1, 2)};
  ap.amplitude[0] = 1.0;
  ap.amplitude[1] = 2.0;
  ap.phase[1] = std::numbers::pi / 2;
  const auto s = recompose(ap);
  EXPECT_EQ(s[0], Complex(1.0, 0.0));
  EXPECT_NEAR(s[1].real(), 0.0, 1e-12);
  EXPECT_NEAR(s[1].imag(), 2.0, 1e-12);
}

TEST(Recompose, InverseOfDecompose) {
  AmplitudePhase ap{random_grid(2, 4, 4, 41, 0.01, 3.0),
                    random_grid(2, 4, 4, 42, -std::numbers::pi + 1e-6, std::numbers::pi)};
  const auto back = decompose(recompose(ap));
  EXPECT_LT(max_abs_diff(back.amplitude, ap.amplitude), 1e-12);
  EXPECT_LT(max_abs_diff(back.phase, ap.phase), 1e-12);
}

TEST(Recompose, NegativeAmplitudeRejected) {
  AmplitudePhase ap{RealGrid(1, 1, 1, -1.0), RealGrid(1, 1, 1)};
  EXPECT_THROW(recompose(ap), DomainError);
}

TEST(MffForward, PinnedOneIsLowBranchTwice) {
  const RealGrid lr = random_grid(2, 4, 4, 43), hr = random_grid(2, 8, 8, 44);
  MffParams p = identity_projection(2);
  p.alpha_override = 1.0;
  p.beta_override = 1.0;
  const RealGrid up = upsample2x(lr);
  EXPECT_LT(max_abs_diff(mff_forward(lr, hr, p), 2.0 * up), 1e-9);
}

TEST(MffForward, PinnedZeroAddsHighBranch) {
  const RealGrid lr = random_grid(2, 4, 4, 45), hr = random_grid(2, 8, 8, 46);
  MffParams p = identity_projection(2);
  p.alpha_override = 0.0;
  p.beta_override = 0.0;
  EXPECT_LT(max_abs_diff(mff_forward(lr, hr, p), upsample2x(lr) + hr), 1e-9);
}

TEST(MffForward, ZeroProjectionIsExactPassthrough) {
  const RealGrid lr = random_grid(3, 4, 4, 47), hr = random_grid(3, 8, 8, 48);
  MffParams p = mff_init(3, 7);
  EXPECT_EQ(p.alpha(), 0.5);
  EXPECT_EQ(p.beta(), 0.5);
  EXPECT_EQ(mff_forward(lr, hr, p), upsample2x(lr));
  for (double a : {0.0, 1.0}) {
    p.alpha_override = a;
    p.beta_override = a;
    EXPECT_EQ(mff_forward(lr, hr, p), upsample2x(lr));
  }
}

TEST(MffForward, ShapeErrors) {
  const MffParams p = mff_init(2);
  EXPECT_THROW(mff_forward(RealGrid(2, 4, 4), RealGrid(3, 8, 8), p), ShapeError);
  EXPECT_THROW(mff_forward(RealGrid(2, 4, 4), RealGrid(2, 8, 6), p), ShapeError);
  EXPECT_THROW(mff_forward(RealGrid(2, 4, 4), RealGrid(2, 4, 4), p), ShapeError);
}

TEST(MffForward, ResidueIsMeasuredAndFinite) {
  const RealGrid lr = random_grid(2, 4, 4, 49), hr = random_grid(2, 8, 8, 50);
  MffParams p = identity_projection(2);
  MffCache cache;
  const RealGrid out = mff_forward(lr, hr, p, &cache);
  EXPECT_TRUE(all_finite(out));
  EXPECT_TRUE(std::isfinite(cache.imag_residue));
  std::cout << "[ measured ] imaginary residue at alpha=beta=0.5: " << cache.imag_residue << "\n";
}

TEST(MffInit, Deterministic) {
  const MffParams a = mff_init(4, 11), b = mff_init(4, 11);
  EXPECT_EQ(a.conv_weights, b.conv_weights);
  EXPECT_EQ(a.conv_bias, b.conv_bias);
  EXPECT_EQ(a.alpha_raw, b.alpha_raw);
  EXPECT_THROW(mff_init(0), ConfigError);
}

TEST(MffBackward, FiniteDifferenceCheck) {
  for (auto [c, h] : {std::pair{2u, 2u}, std::pair{2u, 4u}}) {
    MffHarness harness(c, h, h, 60 + h);
    const LossFn loss = std::cref(harness);
    const auto rep = finite_diff_grad_check(loss, harness.store, 1e-5, 1e-4);
    for (const auto& pc : rep.params)
      EXPECT_TRUE(pc.pass) << c << "x" << 2 * h << " " << pc.name << " rel " << pc.max_rel_error;
  }
}

TEST(MffBackward, AlphaGradientVanishesForEqualAmplitudes) {
  // hr = upsample(lr) makes A_lr == A_hr bin for bin.
  const RealGrid lr = random_grid(2, 4, 4, 70);
  const RealGrid hr = upsample2x(lr);
  MffParams p = identity_projection(2);
  MffCache cache;
  const RealGrid out = mff_forward(lr, hr, p, &cache);
  const MffGrads g = mff_backward(cache, p, out);
  EXPECT_EQ(g.alpha_raw, 0.0);
}

TEST(MffBackward, ZeroUpstreamGivesZero) {
  const RealGrid lr = random_grid(2, 4, 4, 71), hr = random_grid(2, 8, 8, 72);
  MffParams p = identity_projection(2);
  MffCache cache;
  mff_forward(lr, hr, p, &cache);
  const MffGrads g = mff_backward(cache, p, RealGrid(2, 8, 8));
  EXPECT_EQ(g.alpha_raw, 0.0);
  EXPECT_EQ(g.beta_raw, 0.0);
  for (double v : g.lr.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.hr.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.conv_weights) EXPECT_EQ(v, 0.0);
  for (double v : g.conv_bias) EXPECT_EQ(v, 0.0);
}

TEST(MffBackward, PinnedWeightsGetNoGradient) {
  const RealGrid lr = random_grid(2, 4, 4, 73), hr = random_grid(2, 8, 8, 74);
  MffParams p = identity_projection(2);
  p.alpha_override = 1.0;
  p.beta_override = 0.0;
  MffCache cache;
  const RealGrid out = mff_forward(lr, hr, p, &cache);
  const MffGrads g = mff_backward(cache, p, out);
  EXPECT_EQ(g.alpha_raw, 0.0);
  EXPECT_EQ(g.beta_raw, 0.0);
}
