#pragma once

#include <cmath>
#include <numbers>

#include "ielkit/fft.hpp"
#include "ielkit/grid.hpp"

namespace ielkit {

// One inverse-evolution stack: `depth` explicit backward-heat steps u - tau*Lap(u).
struct IelConfig {
  int depth = 0;
  double tau = 0.1;
  Padding boundary = Padding::replicate;

  void validate() const {
    if (depth < 0 || depth > 64) throw ConfigError("iel depth must be in [0, 64]");
    if (!(tau > 0.0 && tau <= 0.5)) throw ConfigError("iel tau must be in (0, 0.5]");
    if (boundary == Padding::zero) throw ConfigError("iel boundary must be replicate or periodic");
  }
};

/// Per-channel 5-point Laplacian [[0,1,0],[1,-4,1],[0,1,0]].
inline RealGrid laplacian(const RealGrid& in, Padding boundary) {
  const auto h = static_cast<std::ptrdiff_t>(in.height());
  const auto w = static_cast<std::ptrdiff_t>(in.width());
  RealGrid out(in.channels(), in.height(), in.width());
  auto at = [&](std::size_t c, std::ptrdiff_t y, std::ptrdiff_t x) {
    const auto sy = pad_index(y, h, boundary);
    const auto sx = pad_index(x, w, boundary);
    if (sy < 0 || sx < 0) return 0.0;
    return in(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
  };
  for (std::size_t c = 0; c < in.channels(); ++c)
    for (std::ptrdiff_t y = 0; y < h; ++y)
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        const bool interior = y > 0 && x > 0 && y + 1 < h && x + 1 < w;
        const auto uy = static_cast<std::size_t>(y), ux = static_cast<std::size_t>(x);
        const double center = in(c, uy, ux);
        // Differences against the center keep constants in the null space exactly.
        if (interior) {
          out(c, uy, ux) = (in(c, uy - 1, ux) - center) + (in(c, uy + 1, ux) - center) +
                           (in(c, uy, ux - 1) - center) + (in(c, uy, ux + 1) - center);
        } else {
          out(c, uy, ux) = (at(c, y - 1, x) - center) + (at(c, y + 1, x) - center) +
                           (at(c, y, x - 1) - center) + (at(c, y, x + 1) - center);
        }
      }
  return out;
}

inline RealGrid iel_step(const RealGrid& in, double tau, Padding boundary) {
  if (!(tau > 0.0)) throw ConfigError("iel_step: tau must be positive");
  RealGrid out = laplacian(in, boundary);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] - tau * out[i];
  return out;
}

inline RealGrid iel_apply(RealGrid in, const IelConfig& cfg) {
  cfg.validate();
  for (int d = 0; d < cfg.depth; ++d) in = iel_step(in, cfg.tau, cfg.boundary);
  return in;
}

// The replicate- and periodic-boundary Laplacians are symmetric matrices, so
// the stack is self-adjoint and its backward pass is the forward map.
inline RealGrid iel_backward(const RealGrid& grad_out, const IelConfig& cfg) {
  return iel_apply(grad_out, cfg);
}

/// Eigenvalue magnitude s_kl of -Lap for Fourier mode (k, l) on an H x W torus.
inline double laplacian_symbol(std::size_t k, std::size_t l, std::size_t h, std::size_t w) {
  const double sk = std::sin(std::numbers::pi * static_cast<double>(k) / static_cast<double>(h));
  const double sl = std::sin(std::numbers::pi * static_cast<double>(l) / static_cast<double>(w));
  return 4.0 * sk * sk + 4.0 * sl * sl;
}

/// Gain (1 + tau*s_kl)^depth applied to mode (k, l) by a periodic IEL stack.
inline double iel_multiplier(std::size_t k, std::size_t l, std::size_t h, std::size_t w,
                             const IelConfig& cfg) {
  return std::pow(1.0 + cfg.tau * laplacian_symbol(k, l, h, w), cfg.depth);
}

/// Fourier-domain evaluation of iel_apply; periodic boundary only.
inline RealGrid iel_spectral_oracle(const RealGrid& in, const IelConfig& cfg) {
  cfg.validate();
  if (cfg.boundary != Padding::periodic)
    throw DomainError("iel_spectral_oracle supports only the periodic boundary");
  if (cfg.depth == 0) return in;
  ComplexSpectrum s = fft2(in);
  for (std::size_t c = 0; c < s.channels(); ++c)
    for (std::size_t k = 0; k < s.height(); ++k)
      for (std::size_t l = 0; l < s.width(); ++l)
        s(c, k, l) *= iel_multiplier(k, l, s.height(), s.width(), cfg);
  return ifft2(s);
}

}  // namespace ielkit
