#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "ielkit/grid.hpp"

namespace ielkit {

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Twiddle exp(sign * 2*pi*i * k / n) evaluated directly per k.
inline std::vector<Complex> twiddles(std::size_t n, double sign) {
  std::vector<Complex> w(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                       static_cast<double>(n);
    w[k] = {std::cos(ang), std::sin(ang)};
  }
  return w;
}

// Plain complex product; std::complex operator* takes the slow Annex G path.
inline Complex cmul(Complex a, Complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

// Unnormalized 1D DFT in place. sign = -1 forward, +1 inverse.
// Power-of-two lengths use iterative radix-2; others fall back to the direct sum.
inline void dft1d(std::vector<Complex>& a, const std::vector<Complex>& w) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  if (is_pow2(n)) {
    for (std::size_t i = 1, j = 0; i < n; ++i) {
      std::size_t bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t step = n / len;
      const std::size_t half = len / 2;
      for (std::size_t i = 0; i < n; i += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const Complex u = a[i + k];
          const Complex v = cmul(a[i + k + half], w[k * step]);
          a[i + k] = u + v;
          a[i + k + half] = u - v;
        }
      }
    }
    return;
  }
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{0.0, 0.0};
    for (std::size_t m = 0; m < n; ++m) acc += cmul(a[m], w[(k * m) % n]);
    out[k] = acc;
  }
  a.swap(out);
}

inline void dft2d_inplace(ComplexSpectrum& s, double sign) {
  const std::size_t h = s.height(), w = s.width();
  const auto wr = twiddles(w, sign);
  const auto wc = twiddles(h, sign);
  std::vector<Complex> buf;
  for (std::size_t c = 0; c < s.channels(); ++c) {
    buf.resize(w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) buf[x] = s(c, y, x);
      dft1d(buf, wr);
      for (std::size_t x = 0; x < w; ++x) s(c, y, x) = buf[x];
    }
    buf.resize(h);
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t y = 0; y < h; ++y) buf[y] = s(c, y, x);
      dft1d(buf, wc);
      for (std::size_t y = 0; y < h; ++y) s(c, y, x) = buf[y];
    }
  }
}

}  // namespace detail

/// Per-channel unnormalized forward 2D DFT.
inline ComplexSpectrum fft2(const RealGrid& input) {
  ComplexSpectrum s(input.channels(), input.height(), input.width());
  for (std::size_t i = 0; i < input.size(); ++i) s[i] = {input[i], 0.0};
  detail::dft2d_inplace(s, -1.0);
  return s;
}

/// Forward DFT of a complex grid (same convention as fft2).
inline ComplexSpectrum fft2(ComplexSpectrum input) {
  detail::dft2d_inplace(input, -1.0);
  return input;
}

/// Full complex inverse DFT with 1/(H*W) normalization.
inline ComplexSpectrum ifft2_complex(ComplexSpectrum input) {
  detail::dft2d_inplace(input, +1.0);
  const double norm = 1.0 / static_cast<double>(input.plane_size());
  for (auto& z : input.data()) z *= norm;
  return input;
}

struct InverseResult {
  RealGrid real;
  // Largest |imag| dropped when taking the real part.
  double imag_residue = 0.0;
};

/// Inverse DFT returning the real part plus the discarded imaginary residue.
inline InverseResult ifft2_with_residue(const ComplexSpectrum& input) {
  const ComplexSpectrum z = ifft2_complex(input);
  InverseResult r{RealGrid(z.channels(), z.height(), z.width()), 0.0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    r.real[i] = z[i].real();
    r.imag_residue = std::max(r.imag_residue, std::abs(z[i].imag()));
  }
  return r;
}

inline RealGrid ifft2(const ComplexSpectrum& input) { return ifft2_with_residue(input).real; }

}  // namespace ielkit
