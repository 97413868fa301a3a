#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ielkit/error.hpp"

namespace ielkit {

using Complex = std::complex<double>;

// Boundary handling shared by convolution and the Laplacian stencil.
enum class Padding { replicate, periodic, zero };

inline const char* to_string(Padding p) {
  switch (p) {
    case Padding::replicate: return "replicate";
    case Padding::periodic: return "periodic";
    case Padding::zero: return "zero";
  }
  return "?";
}

inline Padding padding_from_string(const std::string& s) {
  if (s == "replicate") return Padding::replicate;
  if (s == "periodic") return Padding::periodic;
  if (s == "zero") return Padding::zero;
  throw ConfigError("unknown boundary mode '" + s + "'");
}

// Maps a possibly out-of-range index onto [0, n) under the padding rule.
// Returns -1 for zero padding outside the grid.
inline std::ptrdiff_t pad_index(std::ptrdiff_t i, std::ptrdiff_t n, Padding p) {
  if (i >= 0 && i < n) return i;
  switch (p) {
    case Padding::replicate: return std::clamp<std::ptrdiff_t>(i, 0, n - 1);
    case Padding::periodic: return ((i % n) + n) % n;
    case Padding::zero: return -1;
  }
  return -1;
}

// C x H x W dense grid, row-major within each channel plane.
template <typename T>
class BasicGrid {
 public:
  BasicGrid() = default;
  BasicGrid(std::size_t channels, std::size_t height, std::size_t width, T fill = T{})
      : channels_(channels), height_(height), width_(width),
        data_(channels * height * width, fill) {}
  BasicGrid(std::size_t channels, std::size_t height, std::size_t width, std::vector<T> data)
      : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != channels_ * height_ * width_)
      throw ShapeError("grid data length " + std::to_string(data_.size()) +
                       " does not match " + shape_string());
  }

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t plane_size() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * height_ + y) * width_ + x];
  }
  const T& operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> plane(std::size_t c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const T> plane(std::size_t c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const BasicGrid& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }
  template <typename U>
  bool same_shape(const BasicGrid<U>& o) const {
    return channels_ == o.channels() && height_ == o.height() && width_ == o.width();
  }

  std::string shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" +
           std::to_string(width_);
  }

  bool operator==(const BasicGrid& o) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

using RealGrid = BasicGrid<double>;
using ComplexSpectrum = BasicGrid<Complex>;
// Single-plane grid of class ids.
using LabelGrid = BasicGrid<std::int32_t>;

template <typename T>
void require_same_shape(const BasicGrid<T>& a, const BasicGrid<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape " + a.shape_string() + " vs " +
                     b.shape_string());
}

inline bool all_finite(const RealGrid& g) {
  return std::all_of(g.data().begin(), g.data().end(),
                     [](double v) { return std::isfinite(v); });
}

inline RealGrid& operator+=(RealGrid& a, const RealGrid& b) {
  require_same_shape(a, b, "grid add");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline RealGrid operator+(RealGrid a, const RealGrid& b) { return a += b; }

inline RealGrid& operator-=(RealGrid& a, const RealGrid& b) {
  require_same_shape(a, b, "grid subtract");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline RealGrid operator-(RealGrid a, const RealGrid& b) { return a -= b; }

inline RealGrid operator*(double s, RealGrid a) {
  for (auto& v : a.data()) v *= s;
  return a;
}

inline double max_abs_diff(const RealGrid& a, const RealGrid& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const ComplexSpectrum& a, const ComplexSpectrum& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sum_squares(const RealGrid& g) {
  double s = 0.0;
  for (double v : g.data()) s += v * v;
  return s;
}

// Extracts channel range [first, first + count) as a new grid.
inline RealGrid slice_channels(const RealGrid& g, std::size_t first, std::size_t count) {
  if (first + count > g.channels()) throw ShapeError("channel slice out of range");
  RealGrid out(count, g.height(), g.width());
  std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(first * g.plane_size()),
              count * g.plane_size(), out.data().begin());
  return out;
}

}  // namespace ielkit
