#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "ielkit/conv.hpp"
#include "ielkit/fft.hpp"
#include "ielkit/grid.hpp"
#include "ielkit/params.hpp"

namespace ielkit {

// Polar view of a spectrum. Amplitude >= 0, phase in (-pi, pi], phase 0 where
// the amplitude vanishes.
struct AmplitudePhase {
  RealGrid amplitude;
  RealGrid phase;
};

// Bins whose imaginary part is below `snap` are treated as exactly real, so the
// phase is 0 or pi. Upsampled features have structurally real bins off the
// self-conjugate set, and FFT rounding noise would otherwise flip them between
// -pi and pi from one evaluation to the next.
inline double phase_of(Complex z, double snap = 0.0) {
  if (z.real() == 0.0 && z.imag() == 0.0) return 0.0;
  if (std::abs(z.imag()) <= snap) return z.real() < 0.0 ? std::numbers::pi : 0.0;
  // +0.0 folds a negative zero imaginary part onto the upper branch (pi, not -pi).
  return std::atan2(z.imag() + 0.0, z.real());
}

// Snap threshold relative to the largest bin of a channel plane.
inline constexpr double kPhaseSnapRelative = 1e-13;

inline AmplitudePhase decompose(const ComplexSpectrum& s) {
  AmplitudePhase ap{RealGrid(s.channels(), s.height(), s.width()),
                    RealGrid(s.channels(), s.height(), s.width())};
  const std::size_t plane = s.plane_size();
  for (std::size_t c = 0; c < s.channels(); ++c) {
    double peak = 0.0;
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) peak = std::max(peak, std::abs(s[i]));
    const double snap = kPhaseSnapRelative * peak;
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
      ap.amplitude[i] = std::abs(s[i]);
      ap.phase[i] = phase_of(s[i], snap);
    }
  }
  return ap;
}

inline ComplexSpectrum recompose(const AmplitudePhase& ap) {
  require_same_shape(ap.amplitude, ap.phase, "recompose");
  const auto& a = ap.amplitude;
  ComplexSpectrum s(a.channels(), a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0) throw DomainError("recompose: negative amplitude");
    s[i] = {a[i] * std::cos(ap.phase[i]), a[i] * std::sin(ap.phase[i])};
  }
  return s;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Fusion weights and the residual 1x1 projection. alpha/beta are the logistic
// of the raw values unless pinned by an override.
struct MffParams {
  std::size_t channels = 1;
  double alpha_raw = 0.0;
  double beta_raw = 0.0;
  std::vector<double> conv_weights;  // [out][in], channels x channels
  std::vector<double> conv_bias;
  std::optional<double> alpha_override;
  std::optional<double> beta_override;

  double alpha() const { return alpha_override ? *alpha_override : logistic(alpha_raw); }
  double beta() const { return beta_override ? *beta_override : logistic(beta_raw); }
  ConvShape conv_shape() const { return {channels, channels, 1}; }
};

/// alpha = beta = 0.5 and a zero projection, so a fresh module passes the
/// upsampled low-resolution branch straight through. The seed is accepted for
/// interface symmetry with the other initializers; nothing here is random.
inline MffParams mff_init(std::size_t channels, std::uint64_t /*seed*/ = 0) {
  if (channels == 0) throw ConfigError("mff_init: channels must be >= 1");
  MffParams p;
  p.channels = channels;
  p.conv_weights.assign(channels * channels, 0.0);
  p.conv_bias.assign(channels, 0.0);
  return p;
}

struct MffCache {
  RealGrid upsampled;
  ComplexSpectrum spec_lr, spec_hr;
  AmplitudePhase polar_lr, polar_hr;
  RealGrid amplitude, phase;  // fused
  RealGrid spatial;           // real part of the inverse transform
  double imag_residue = 0.0;
};

struct MffGrads {
  RealGrid lr, hr;
  double alpha_raw = 0.0;
  double beta_raw = 0.0;
  std::vector<double> conv_weights, conv_bias;
};

inline void check_mff_shapes(const RealGrid& lr, const RealGrid& hr, const MffParams& p) {
  if (lr.channels() != hr.channels())
    throw ShapeError("mff: channel mismatch " + lr.shape_string() + " vs " + hr.shape_string());
  if (hr.height() != 2 * lr.height() || hr.width() != 2 * lr.width())
    throw ShapeError("mff: high-resolution input must be exactly twice " + lr.shape_string());
  if (p.channels != lr.channels()) throw ShapeError("mff: parameter channel count mismatch");
}

/// Amplitude/phase fusion of a low- and high-resolution feature pair.
inline RealGrid mff_forward(const RealGrid& lr, const RealGrid& hr, const MffParams& p,
                            MffCache* cache = nullptr) {
  check_mff_shapes(lr, hr, p);
  MffCache local;
  MffCache& c = cache ? *cache : local;
  c.upsampled = upsample2x(lr);
  c.spec_lr = fft2(c.upsampled);
  c.spec_hr = fft2(hr);
  c.polar_lr = decompose(c.spec_lr);
  c.polar_hr = decompose(c.spec_hr);
  const double alpha = p.alpha(), beta = p.beta();
  c.amplitude = RealGrid(hr.channels(), hr.height(), hr.width());
  c.phase = RealGrid(hr.channels(), hr.height(), hr.width());
  for (std::size_t i = 0; i < hr.size(); ++i) {
    c.amplitude[i] = alpha * c.polar_lr.amplitude[i] + (1.0 - alpha) * c.polar_hr.amplitude[i];
    c.phase[i] = beta * c.polar_lr.phase[i] + (1.0 - beta) * c.polar_hr.phase[i];
  }
  auto inv = ifft2_with_residue(recompose({c.amplitude, c.phase}));
  c.spatial = std::move(inv.real);
  c.imag_residue = inv.imag_residue;
  RealGrid out = conv2d(c.spatial, p.conv_weights, p.conv_bias, p.conv_shape(), Padding::zero);
  out += c.upsampled;
  return out;
}

/// Reverse-mode pass through projection, inverse DFT, mixing, polar split,
/// forward DFTs and upsampling. Zero-amplitude bins pass no gradient.
inline MffGrads mff_backward(const MffCache& c, const MffParams& p, const RealGrid& grad_out) {
  require_same_shape(grad_out, c.upsampled, "mff_backward");
  const std::size_t n = grad_out.size();
  const double plane = static_cast<double>(grad_out.plane_size());
  MffGrads g;

  auto proj = conv2d_backward(c.spatial, p.conv_weights, p.conv_shape(), Padding::zero, grad_out);
  g.conv_weights = std::move(proj.weights);
  g.conv_bias = std::move(proj.bias);

  // d Re(ifft(Z)) / dZ : gZ = fft(gF) / N
  ComplexSpectrum gz = fft2(proj.input);
  const double alpha = p.alpha(), beta = p.beta();
  ComplexSpectrum gx_lr(gz.channels(), gz.height(), gz.width());
  ComplexSpectrum gx_hr(gz.channels(), gz.height(), gz.width());
  double g_alpha = 0.0, g_beta = 0.0;

  auto polar_back = [](Complex x, double ga, double gp) -> Complex {
    const double r2 = std::norm(x);
    if (r2 == 0.0) return {0.0, 0.0};
    const double r = std::sqrt(r2);
    return {ga * x.real() / r - gp * x.imag() / r2, ga * x.imag() / r + gp * x.real() / r2};
  };

  for (std::size_t i = 0; i < n; ++i) {
    const Complex gzi = gz[i] / plane;
    const double cp = std::cos(c.phase[i]), sp = std::sin(c.phase[i]);
    const double ga = gzi.real() * cp + gzi.imag() * sp;
    const double gp = c.amplitude[i] * (gzi.imag() * cp - gzi.real() * sp);
    g_alpha += ga * (c.polar_lr.amplitude[i] - c.polar_hr.amplitude[i]);
    g_beta += gp * (c.polar_lr.phase[i] - c.polar_hr.phase[i]);
    gx_lr[i] = polar_back(c.spec_lr[i], alpha * ga, beta * gp);
    gx_hr[i] = polar_back(c.spec_hr[i], (1.0 - alpha) * ga, (1.0 - beta) * gp);
  }
  g.alpha_raw = p.alpha_override ? 0.0 : g_alpha * alpha * (1.0 - alpha);
  g.beta_raw = p.beta_override ? 0.0 : g_beta * beta * (1.0 - beta);

  // Adjoint of the real-input forward DFT: N * Re(ifft(gX)).
  RealGrid g_up = ifft2(gx_lr);
  g.hr = ifft2(gx_hr);
  for (std::size_t i = 0; i < n; ++i) {
    g_up[i] = g_up[i] * plane + grad_out[i];
    g.hr[i] *= plane;
  }
  g.lr = upsample2x_backward(g_up);
  return g;
}

// Parameter-store binding used by the networks: four entries under `prefix`.
struct MffSlots {
  std::size_t alpha = 0, beta = 0, weights = 0, bias = 0;
  std::size_t channels = 0;
};

inline MffSlots mff_register(ParamStore& store, const std::string& prefix, std::size_t channels) {
  const MffParams init = mff_init(channels);
  MffSlots s;
  s.channels = channels;
  s.alpha = store.add(prefix + ".alpha_raw", {1}, init.alpha_raw);
  s.beta = store.add(prefix + ".beta_raw", {1}, init.beta_raw);
  s.weights = store.add(prefix + ".conv_weight", {channels, channels, 1, 1});
  s.bias = store.add(prefix + ".conv_bias", {channels});
  return s;
}

inline MffParams mff_params_from(const ParamStore& store, const MffSlots& s) {
  MffParams p;
  p.channels = s.channels;
  p.alpha_raw = store.entry(s.alpha).value[0];
  p.beta_raw = store.entry(s.beta).value[0];
  p.conv_weights = store.entry(s.weights).value;
  p.conv_bias = store.entry(s.bias).value;
  return p;
}

inline void mff_accumulate(ParamStore& store, const MffSlots& s, const MffGrads& g) {
  store.entry(s.alpha).grad[0] += g.alpha_raw;
  store.entry(s.beta).grad[0] += g.beta_raw;
  store.accumulate(s.weights, g.conv_weights);
  store.accumulate(s.bias, g.conv_bias);
}

}  // namespace ielkit
