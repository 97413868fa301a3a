#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ielkit/grid.hpp"

namespace ielkit {

struct ConvShape {
  std::size_t out_channels = 1;
  std::size_t in_channels = 1;
  std::size_t kernel = 3;

  std::size_t weight_count() const { return out_channels * in_channels * kernel * kernel; }
};

// Dense [Cout, Cin, k, k] kernel.
struct Kernel {
  ConvShape shape;
  std::vector<double> weights;

  Kernel() = default;
  Kernel(ConvShape s, double fill = 0.0) : shape(s), weights(s.weight_count(), fill) {}
  double& at(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return weights[((o * shape.in_channels + i) * shape.kernel + ky) * shape.kernel + kx];
  }
};

struct ConvGrads {
  RealGrid input;
  std::vector<double> weights;
  std::vector<double> bias;
};

namespace detail {

inline void check_conv(const RealGrid& in, std::span<const double> w, std::span<const double> b,
                       const ConvShape& s) {
  if (s.kernel % 2 == 0) throw ConfigError("convolution kernel size must be odd");
  if (in.channels() != s.in_channels)
    throw ShapeError("conv2d: input has " + std::to_string(in.channels()) +
                     " channels, kernel expects " + std::to_string(s.in_channels));
  if (w.size() != s.weight_count()) throw ShapeError("conv2d: weight count mismatch");
  if (b.size() != s.out_channels) throw ShapeError("conv2d: bias length mismatch");
}

}  // namespace detail

namespace detail {

// Plane copied into a (h+2r) x (w+2r) buffer with the border filled per padding.
inline void pad_plane(std::span<const double> src, std::size_t h, std::size_t w, std::size_t r,
                      Padding p, std::vector<double>& dst) {
  const std::size_t pw = w + 2 * r, ph = h + 2 * r;
  dst.assign(ph * pw, 0.0);
  for (std::size_t y = 0; y < ph; ++y) {
    const auto sy = pad_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(r),
                              static_cast<std::ptrdiff_t>(h), p);
    if (sy < 0) continue;
    for (std::size_t x = 0; x < pw; ++x) {
      const auto sx = pad_index(static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(r),
                                static_cast<std::ptrdiff_t>(w), p);
      if (sx >= 0) dst[y * pw + x] = src[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
    }
  }
}

// Adjoint of pad_plane: adds every padded cell back onto its source pixel.
inline void fold_plane(const std::vector<double>& padded, std::size_t h, std::size_t w, std::size_t r,
                       Padding p, std::span<double> dst) {
  const std::size_t pw = w + 2 * r, ph = h + 2 * r;
  for (std::size_t y = 0; y < ph; ++y) {
    const auto sy = pad_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(r),
                              static_cast<std::ptrdiff_t>(h), p);
    if (sy < 0) continue;
    for (std::size_t x = 0; x < pw; ++x) {
      const auto sx = pad_index(static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(r),
                                static_cast<std::ptrdiff_t>(w), p);
      if (sx >= 0) dst[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] += padded[y * pw + x];
    }
  }
}

}  // namespace detail

/// Same-size 2D cross-correlation (no kernel flip).
inline RealGrid conv2d(const RealGrid& in, std::span<const double> weights,
                       std::span<const double> bias, const ConvShape& s, Padding padding) {
  detail::check_conv(in, weights, bias, s);
  const std::size_t h = in.height(), w = in.width(), k = s.kernel, r = k / 2, pw = w + 2 * r;
  RealGrid out(s.out_channels, h, w);
  std::vector<std::vector<double>> padded(s.in_channels);
  for (std::size_t c = 0; c < s.in_channels; ++c) detail::pad_plane(in.plane(c), h, w, r, padding, padded[c]);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    auto op = out.plane(o);
    std::fill(op.begin(), op.end(), bias[o]);
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      const double* ip = padded[c].data();
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = weights[((o * s.in_channels + c) * k + ky) * k + kx];
          if (wv == 0.0) continue;
          for (std::size_t y = 0; y < h; ++y) {
            const double* row = ip + (y + ky) * pw + kx;
            double* orow = op.data() + y * w;
            for (std::size_t x = 0; x < w; ++x) orow[x] += wv * row[x];
          }
        }
    }
  }
  return out;
}

inline RealGrid conv2d(const RealGrid& in, const Kernel& kernel, std::span<const double> bias,
                       Padding padding) {
  return conv2d(in, kernel.weights, bias, kernel.shape, padding);
}

/// Reverse-mode derivatives of conv2d given the upstream gradient.
inline ConvGrads conv2d_backward(const RealGrid& in, std::span<const double> weights,
                                 const ConvShape& s, Padding padding, const RealGrid& grad_out) {
  const std::size_t h = in.height(), w = in.width(), k = s.kernel, r = k / 2, pw = w + 2 * r;
  if (grad_out.channels() != s.out_channels || grad_out.height() != h || grad_out.width() != w)
    throw ShapeError("conv2d_backward: upstream gradient shape mismatch");
  if (in.channels() != s.in_channels || weights.size() != s.weight_count())
    throw ShapeError("conv2d_backward: input or weights do not match the kernel shape");
  ConvGrads g{RealGrid(in.channels(), h, w), std::vector<double>(s.weight_count(), 0.0),
              std::vector<double>(s.out_channels, 0.0)};
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    double bsum = 0.0;
    for (double v : grad_out.plane(o)) bsum += v;
    g.bias[o] = bsum;
  }
  std::vector<double> padded, gpad;
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    detail::pad_plane(in.plane(c), h, w, r, padding, padded);
    gpad.assign(padded.size(), 0.0);
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      const double* gp = grad_out.plane(o).data();
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t wi = ((o * s.in_channels + c) * k + ky) * k + kx;
          const double wv = weights[wi];
          double wacc = 0.0;
          for (std::size_t y = 0; y < h; ++y) {
            const double* row = padded.data() + (y + ky) * pw + kx;
            double* grow = gpad.data() + (y + ky) * pw + kx;
            const double* orow = gp + y * w;
            for (std::size_t x = 0; x < w; ++x) {
              wacc += orow[x] * row[x];
              grow[x] += wv * orow[x];
            }
          }
          g.weights[wi] = wacc;
        }
    }
    detail::fold_plane(gpad, h, w, r, padding, g.input.plane(c));
  }
  return g;
}

/// Bilinear 2x upsampling, half-pixel centers, edge-clamped sampling.
inline RealGrid upsample2x(const RealGrid& in) {
  const std::size_t h = in.height(), w = in.width();
  RealGrid out(in.channels(), 2 * h, 2 * w);
  if (in.empty()) return out;
  struct Tap {
    std::size_t i0, i1;
    double f;
  };
  auto taps = [](std::size_t n) {
    std::vector<Tap> t(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const double src = std::max((static_cast<double>(i) + 0.5) / 2.0 - 0.5, 0.0);
      const auto i0 = std::min(static_cast<std::size_t>(std::floor(src)), n - 1);
      const std::size_t i1 = std::min(i0 + 1, n - 1);
      t[i] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(h), tx = taps(w);
  for (std::size_t c = 0; c < in.channels(); ++c)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t x = 0; x < 2 * w; ++x) {
        const auto& a = ty[y];
        const auto& b = tx[x];
        const double top = (1.0 - b.f) * in(c, a.i0, b.i0) + b.f * in(c, a.i0, b.i1);
        const double bot = (1.0 - b.f) * in(c, a.i1, b.i0) + b.f * in(c, a.i1, b.i1);
        out(c, y, x) = (1.0 - a.f) * top + a.f * bot;
      }
  return out;
}

/// Adjoint of upsample2x: scatters a 2H x 2W gradient back onto H x W.
inline RealGrid upsample2x_backward(const RealGrid& grad_out) {
  if (grad_out.height() % 2 || grad_out.width() % 2)
    throw ShapeError("upsample2x_backward: gradient dims must be even");
  const std::size_t h = grad_out.height() / 2, w = grad_out.width() / 2;
  RealGrid g(grad_out.channels(), h, w);
  auto tap = [](std::size_t i, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
    const double src = std::max((static_cast<double>(i) + 0.5) / 2.0 - 0.5, 0.0);
    i0 = std::min(static_cast<std::size_t>(std::floor(src)), n - 1);
    i1 = std::min(i0 + 1, n - 1);
    f = src - static_cast<double>(i0);
  };
  for (std::size_t c = 0; c < g.channels(); ++c)
    for (std::size_t y = 0; y < 2 * h; ++y) {
      std::size_t y0, y1;
      double fy;
      tap(y, h, y0, y1, fy);
      for (std::size_t x = 0; x < 2 * w; ++x) {
        std::size_t x0, x1;
        double fx;
        tap(x, w, x0, x1, fx);
        const double v = grad_out(c, y, x);
        g(c, y0, x0) += (1.0 - fy) * (1.0 - fx) * v;
        g(c, y0, x1) += (1.0 - fy) * fx * v;
        g(c, y1, x0) += fy * (1.0 - fx) * v;
        g(c, y1, x1) += fy * fx * v;
      }
    }
  return g;
}

/// 2x2 average pooling; H and W must be even.
inline RealGrid avg_pool2(const RealGrid& in) {
  if (in.height() % 2 || in.width() % 2) throw ShapeError("avg_pool2: dims must be even");
  const std::size_t h = in.height() / 2, w = in.width() / 2;
  RealGrid out(in.channels(), h, w);
  for (std::size_t c = 0; c < in.channels(); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out(c, y, x) = 0.25 * (in(c, 2 * y, 2 * x) + in(c, 2 * y, 2 * x + 1) +
                               in(c, 2 * y + 1, 2 * x) + in(c, 2 * y + 1, 2 * x + 1));
  return out;
}

inline RealGrid avg_pool2_backward(const RealGrid& grad_out) {
  RealGrid g(grad_out.channels(), 2 * grad_out.height(), 2 * grad_out.width());
  for (std::size_t c = 0; c < g.channels(); ++c)
    for (std::size_t y = 0; y < g.height(); ++y)
      for (std::size_t x = 0; x < g.width(); ++x) g(c, y, x) = 0.25 * grad_out(c, y / 2, x / 2);
  return g;
}

inline RealGrid tanh_act(RealGrid g) {
  for (auto& v : g.data()) v = std::tanh(v);
  return g;
}

// Gradient through tanh given its output.
inline RealGrid tanh_backward(const RealGrid& activated, RealGrid grad_out) {
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    grad_out[i] *= 1.0 - activated[i] * activated[i];
  return grad_out;
}

}  // namespace ielkit
