#pragma once

// Independent reference implementations shared by the unit and acceptance suites.

#include <cmath>
#include <random>

#include "ielkit/metrics.hpp"
#include "ielkit/mff.hpp"
#include "test_util.hpp"

namespace ielkit::testing {

inline LabelGrid random_labels(std::size_t h, std::size_t w, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, classes - 1);
  LabelGrid g(1, h, w);
  for (auto& v : g.data()) v = d(rng);
  return g;
}

// Per-class pixel loops, no confusion matrix.
inline double brute_miou(const LabelGrid& pred, const LabelGrid& gt, int classes) {
  double sum = 0;
  int used = 0;
  for (int c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      tp += pred[i] == c && gt[i] == c;
      fp += pred[i] == c && gt[i] != c;
      fn += pred[i] != c && gt[i] == c;
    }
    if (tp + fp + fn == 0) continue;
    sum += tp / (tp + fp + fn);
    ++used;
  }
  return sum / used;
}

inline double brute_tv(const RealGrid& g) {
  double tv = 0;
  for (std::size_t c = 0; c < g.channels(); ++c)
    for (std::size_t y = 0; y < g.height(); ++y)
      for (std::size_t x = 0; x < g.width(); ++x) {
        if (x + 1 < g.width()) tv += std::abs(g(c, y, x + 1) - g(c, y, x));
        if (y + 1 < g.height()) tv += std::abs(g(c, y + 1, x) - g(c, y, x));
      }
  return tv;
}

inline double brute_mmd(const std::vector<FeatureVector>& a, const std::vector<FeatureVector>& b,
                 double bw) {
  auto k = [bw](const FeatureVector& x, const FeatureVector& y) {
    double d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
    return std::exp(-d / (2 * bw * bw));
  };
  double xx = 0, yy = 0, xy = 0;
  for (const auto& x : a)
    for (const auto& y : a) xx += k(x, y);
  for (const auto& x : b)
    for (const auto& y : b) yy += k(x, y);
  for (const auto& x : a)
    for (const auto& y : b) xy += k(x, y);
  const double m = double(a.size()), n = double(b.size());
  return xx / (m * m) + yy / (n * n) - 2 * xy / (m * n);
}

inline std::vector<FeatureVector> random_set(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::vector<FeatureVector> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(ielkit::testing::random_vector(d, seed + i));
  return s;
}

inline ComplexSpectrum random_spectrum(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  const auto re = random_vector(c * h * w, seed), im = random_vector(c * h * w, seed + 1);
  ComplexSpectrum s(c, h, w);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = {re[i], im[i]};
  return s;
}

inline MffParams identity_projection(std::size_t c) {
  MffParams p = mff_init(c);
  for (std::size_t i = 0; i < c; ++i) p.conv_weights[i * c + i] = 1.0;
  return p;
}

// Loss = sum of squares of mff_forward; store holds the four MFF entries plus
// the two inputs so input gradients are checked too.
struct MffHarness {
  ParamStore store;
  MffSlots slots;
  std::size_t lr_id = 0, hr_id = 0;
  std::size_t c, h, w;

  MffHarness(std::size_t c_, std::size_t h_, std::size_t w_, std::uint64_t seed)
      : c(c_), h(h_), w(w_) {
    slots = mff_register(store, "mff", c);
    lr_id = store.add("f_lr", {c, h, w});
    hr_id = store.add("f_hr", {c, 2 * h, 2 * w});
    store.entry(lr_id).value = random_vector(c * h * w, seed);
    store.entry(hr_id).value = random_vector(c * 4 * h * w, seed + 1);
    store.entry(slots.alpha).value[0] = 0.3;
    store.entry(slots.beta).value[0] = -0.4;
    store.entry(slots.weights).value = random_vector(c * c, seed + 2);
    store.entry(slots.bias).value = random_vector(c, seed + 3);
  }

  double operator()(ParamStore& s) const {
    const RealGrid lr(c, h, w, s.entry(lr_id).value);
    const RealGrid hr(c, 2 * h, 2 * w, s.entry(hr_id).value);
    const MffParams p = mff_params_from(s, slots);
    MffCache cache;
    const RealGrid out = mff_forward(lr, hr, p, &cache);
    const MffGrads g = mff_backward(cache, p, 2.0 * out);
    mff_accumulate(s, slots, g);
    s.accumulate(lr_id, g.lr.data());
    s.accumulate(hr_id, g.hr.data());
    return sum_squares(out);
  }
};

}  // namespace ielkit::testing
