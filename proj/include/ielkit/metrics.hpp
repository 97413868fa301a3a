#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ielkit/fft.hpp"
#include "ielkit/grid.hpp"

namespace ielkit {

// Pixel counts indexed (ground truth, prediction).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes) {}

  void accumulate(const LabelGrid& pred, const LabelGrid& gt) {
    if (!pred.same_shape(gt)) throw ShapeError("confusion matrix: prediction/label shape mismatch");
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const auto t = gt[i], p = pred[i];
      if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= classes_ ||
          static_cast<std::size_t>(p) >= classes_)
        throw DataError("class id out of range [0, " + std::to_string(classes_) + ")");
      ++counts_[static_cast<std::size_t>(t) * classes_ + static_cast<std::size_t>(p)];
    }
  }

  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * classes_ + pred];
  }
  std::size_t classes() const { return classes_; }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
  }

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct IouResult {
  std::vector<double> iou;     // 0 for absent classes
  std::vector<bool> present;   // class occurs in prediction or ground truth
  double mean = 0.0;           // over present classes only
};

inline IouResult iou_from(const ConfusionMatrix& cm) {
  const std::size_t n = cm.classes();
  IouResult r{std::vector<double>(n, 0.0), std::vector<bool>(n, false), 0.0};
  std::size_t used = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    r.present[c] = true;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    r.mean += r.iou[c];
    ++used;
  }
  if (used) r.mean /= static_cast<double>(used);
  return r;
}

inline IouResult miou(const LabelGrid& pred, const LabelGrid& gt, std::size_t classes) {
  ConfusionMatrix cm(classes);
  cm.accumulate(pred, gt);
  return iou_from(cm);
}

namespace detail {

inline std::vector<bool> boundary_mask(const LabelGrid& g) {
  const std::size_t h = g.height(), w = g.width();
  std::vector<bool> m(h * w, false);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const auto v = g(0, y, x);
      m[y * w + x] = (y > 0 && g(0, y - 1, x) != v) || (y + 1 < h && g(0, y + 1, x) != v) ||
                     (x > 0 && g(0, y, x - 1) != v) || (x + 1 < w && g(0, y, x + 1) != v);
    }
  return m;
}

// Fraction of `from` pixels with a `to` pixel within Chebyshev distance tol.
inline double matched_fraction(const std::vector<bool>& from, const std::vector<bool>& to,
                               std::size_t h, std::size_t w, std::size_t tol) {
  std::size_t total = 0, hit = 0;
  const auto t = static_cast<std::ptrdiff_t>(tol);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (!from[y * w + x]) continue;
      ++total;
      bool found = false;
      for (std::ptrdiff_t dy = -t; dy <= t && !found; ++dy)
        for (std::ptrdiff_t dx = -t; dx <= t && !found; ++dx) {
          const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
          const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) ||
              xx >= static_cast<std::ptrdiff_t>(w))
            continue;
          found = to[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
        }
      hit += found;
    }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace detail

/// F1 of 4-neighbour label-transition pixels, matched within `tolerance_px`
/// (Chebyshev). Two boundary-free maps score 1.
inline double boundary_f1(const LabelGrid& pred, const LabelGrid& gt, std::size_t tolerance_px = 1) {
  if (!pred.same_shape(gt)) throw ShapeError("boundary_f1: shape mismatch");
  const auto bp = detail::boundary_mask(pred), bg = detail::boundary_mask(gt);
  const bool any_p = std::find(bp.begin(), bp.end(), true) != bp.end();
  const bool any_g = std::find(bg.begin(), bg.end(), true) != bg.end();
  if (!any_p && !any_g) return 1.0;
  if (!any_p || !any_g) return 0.0;
  const double precision = detail::matched_fraction(bp, bg, gt.height(), gt.width(), tolerance_px);
  const double recall = detail::matched_fraction(bg, bp, gt.height(), gt.width(), tolerance_px);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

namespace detail {

inline bool in_low_disc(std::size_t k, std::size_t l, std::size_t h, std::size_t w,
                        double radius_fraction) {
  const double fk = k <= h / 2 ? double(k) : double(k) - double(h);
  const double fl = l <= w / 2 ? double(l) : double(l) - double(w);
  const double radius = radius_fraction * static_cast<double>(std::min(h, w)) / 2.0;
  return fk * fk + fl * fl <= radius * radius;
}

struct SpectralSplit {
  double low = 0.0, high = 0.0;
};

inline SpectralSplit spectral_split(const RealGrid& field, double radius_fraction) {
  if (!(radius_fraction > 0.0 && radius_fraction < 1.0))
    throw ConfigError("radius_fraction must be in (0, 1)");
  const ComplexSpectrum s = fft2(field);
  SpectralSplit out;
  for (std::size_t c = 0; c < s.channels(); ++c)
    for (std::size_t k = 0; k < s.height(); ++k)
      for (std::size_t l = 0; l < s.width(); ++l) {
        const double e = std::norm(s(c, k, l));
        (in_low_disc(k, l, s.height(), s.width(), radius_fraction) ? out.low : out.high) += e;
      }
  return out;
}

}  // namespace detail

/// Share of spectral energy outside the centred low-frequency disc of radius
/// radius_fraction * min(H, W) / 2 (DC counts as low). Zero field gives 0.
inline double high_freq_energy_ratio(const RealGrid& field, double radius_fraction = 0.5) {
  const auto split = detail::spectral_split(field, radius_fraction);
  const double total = split.low + split.high;
  return total > 0.0 ? split.high / total : 0.0;
}

/// Mean square of the high-pass part of the field (outside the same disc).
inline double high_freq_energy(const RealGrid& field, double radius_fraction = 0.5) {
  const auto split = detail::spectral_split(field, radius_fraction);
  const double n = static_cast<double>(field.plane_size());
  return split.high / (n * static_cast<double>(field.size()));
}

inline double total_variation(const RealGrid& field) {
  double tv = 0.0;
  for (std::size_t c = 0; c < field.channels(); ++c)
    for (std::size_t y = 0; y < field.height(); ++y)
      for (std::size_t x = 0; x < field.width(); ++x) {
        if (x + 1 < field.width()) tv += std::abs(field(c, y, x + 1) - field(c, y, x));
        if (y + 1 < field.height()) tv += std::abs(field(c, y + 1, x) - field(c, y, x));
      }
  return tv;
}

using FeatureVector = std::vector<double>;

inline double gaussian_kernel(const FeatureVector& a, const FeatureVector& b, double bandwidth) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-d2 / (2.0 * bandwidth * bandwidth));
}

namespace detail {

inline void check_sets(const std::vector<FeatureVector>& a, const std::vector<FeatureVector>& b,
                       double bandwidth) {
  if (a.empty() || b.empty()) throw UsageError("mmd: both sets must be non-empty");
  if (!(bandwidth > 0.0)) throw UsageError("mmd: bandwidth must be positive");
  const std::size_t d = a.front().size();
  for (const auto& v : a)
    if (v.size() != d) throw UsageError("mmd: feature dimension mismatch");
  for (const auto& v : b)
    if (v.size() != d) throw UsageError("mmd: feature dimension mismatch");
}

inline double mean_kernel(const std::vector<FeatureVector>& a, const std::vector<FeatureVector>& b,
                          double bw, bool skip_diagonal) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (skip_diagonal && i == j) continue;
      s += gaussian_kernel(a[i], b[j], bw);
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace detail

/// Squared MMD with a Gaussian kernel, V-statistic form
/// mean k(a,a') + mean k(b,b') - 2 mean k(a,b). Equals the squared RKHS
/// distance between the empirical mean embeddings, so it is >= 0 up to rounding.
inline double mmd(const std::vector<FeatureVector>& a, const std::vector<FeatureVector>& b,
                  double bandwidth) {
  detail::check_sets(a, b, bandwidth);
  return detail::mean_kernel(a, a, bandwidth, false) + detail::mean_kernel(b, b, bandwidth, false) -
         2.0 * detail::mean_kernel(a, b, bandwidth, false);
}

/// U-statistic variant (within-set diagonals dropped); can be negative. Sets of
/// size 1 have no off-diagonal pairs and are rejected.
inline double mmd_unbiased(const std::vector<FeatureVector>& a,
                           const std::vector<FeatureVector>& b, double bandwidth) {
  detail::check_sets(a, b, bandwidth);
  if (a.size() < 2 || b.size() < 2) throw UsageError("mmd_unbiased: sets need >= 2 elements");
  return detail::mean_kernel(a, a, bandwidth, true) + detail::mean_kernel(b, b, bandwidth, true) -
         2.0 * detail::mean_kernel(a, b, bandwidth, false);
}

/// Median pairwise Euclidean distance over the pooled sets (bandwidth heuristic).
inline double median_bandwidth(const std::vector<FeatureVector>& a,
                               const std::vector<FeatureVector>& b) {
  std::vector<FeatureVector> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::vector<double> d;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < all[i].size(); ++k)
        s += (all[i][k] - all[j][k]) * (all[i][k] - all[j][k]);
      d.push_back(std::sqrt(s));
    }
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  const double m = d[d.size() / 2];
  return m > 0.0 ? m : 1.0;
}

/// Default embedder: grayscale (channel mean), 8x8 average-pooled, flattened.
inline FeatureVector pooled_embedding(const RealGrid& image, std::size_t cells = 8) {
  const std::size_t h = image.height(), w = image.width();
  if (h < cells || w < cells) throw ShapeError("pooled_embedding: image smaller than pooling grid");
  FeatureVector f(cells * cells, 0.0);
  std::vector<double> counts(cells * cells, 0.0);
  for (std::size_t c = 0; c < image.channels(); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t cell = (y * cells / h) * cells + (x * cells / w);
        f[cell] += image(c, y, x);
        counts[cell] += 1.0;
      }
  for (std::size_t i = 0; i < f.size(); ++i) f[i] /= counts[i];
  return f;
}

}  // namespace ielkit
