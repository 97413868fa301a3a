#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ielkit/segmenter.hpp"

namespace ielkit {

struct GeneratorConfig {
  std::size_t classes = 6;
  std::size_t width = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes < 2) throw ConfigError("generator needs at least 2 classes");
    if (width == 0) throw ConfigError("generator width must be positive");
  }
};

// Label one-hot + noise -> image. Two-level encoder/decoder with a skip:
//   e1 = tanh(conv(x)), e2 = tanh(conv(pool(e1))), out = sigmoid(conv(up(e2) + e1))
struct ToyGenerator {
  GeneratorConfig cfg;
  ParamStore params;
  ConvSlot enc1, enc2, out;
};

inline ToyGenerator make_generator(const GeneratorConfig& cfg) {
  cfg.validate();
  ToyGenerator g;
  g.cfg = cfg;
  g.enc1 = conv_register(g.params, "gen.enc1", {cfg.width, cfg.classes + 1, 3}, cfg.seed);
  g.enc2 = conv_register(g.params, "gen.enc2", {cfg.width, cfg.width, 3}, cfg.seed);
  g.out = conv_register(g.params, "gen.out", {3, cfg.width, 3}, cfg.seed);
  return g;
}

/// Uniform [0, 1) noise plane, a pure function of (seed, index).
inline RealGrid generator_noise(std::uint64_t seed, std::size_t index, std::size_t h, std::size_t w) {
  RealGrid n(1, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      n(0, y, x) = to_unit(mix64(detail::pixel_key(hash_combine(seed, 0x6e6f697365ULL), index, y, x)));
  return n;
}

inline RealGrid generator_input(const LabelGrid& label, const RealGrid& noise, std::size_t classes) {
  if (noise.height() != label.height() || noise.width() != label.width() || noise.channels() != 1)
    throw ShapeError("generator noise must be 1 x " + std::to_string(label.height()) + " x " +
                     std::to_string(label.width()));
  RealGrid x(classes + 1, label.height(), label.width());
  const std::size_t P = label.plane_size();
  for (std::size_t p = 0; p < P; ++p) {
    const auto c = label[p];
    if (c < 0 || static_cast<std::size_t>(c) >= classes) throw DataError("generator: label id out of range");
    x[static_cast<std::size_t>(c) * P + p] = 1.0;
    x[classes * P + p] = noise[p];
  }
  return x;
}

struct GenTape {
  RealGrid x, e1, pooled, e2, merged, out;
};

inline RealGrid gen_forward(const ToyGenerator& g, const LabelGrid& label, const RealGrid& noise,
                            GenTape* tape = nullptr) {
  if (label.height() % 2 || label.width() % 2) throw ShapeError("generator needs even label dimensions");
  GenTape local;
  GenTape& t = tape ? *tape : local;
  t.x = generator_input(label, noise, g.cfg.classes);
  t.e1 = tanh_act(conv_forward(g.params, g.enc1, t.x));
  t.pooled = avg_pool2(t.e1);
  t.e2 = tanh_act(conv_forward(g.params, g.enc2, t.pooled));
  t.merged = upsample2x(t.e2) + t.e1;
  t.out = conv_forward(g.params, g.out, t.merged);
  for (double& v : t.out.data()) v = logistic(v);
  return t.out;
}

inline void gen_backward(ToyGenerator& g, const GenTape& t, RealGrid grad_out) {
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out[i] *= t.out[i] * (1.0 - t.out[i]);
  RealGrid g_merged = conv_backward(g.params, g.out, t.merged, grad_out);
  RealGrid g_e1 = g_merged;
  RealGrid g_e2 = tanh_backward(t.e2, upsample2x_backward(g_merged));
  RealGrid g_pooled = conv_backward(g.params, g.enc2, t.pooled, g_e2);
  g_e1 += avg_pool2_backward(g_pooled);
  conv_backward(g.params, g.enc1, t.x, tanh_backward(t.e1, std::move(g_e1)));
}

/// mean((iel(output) - iel(target))^2) with its gradient w.r.t. output.
inline LossGrad gen_loss_grad(const RealGrid& output, const RealGrid& target, const IelConfig& iel) {
  require_same_shape(output, target, "gen_loss");
  iel.validate();
  const RealGrid diff = iel_apply(output, iel) - iel_apply(target, iel);
  const double n = static_cast<double>(diff.size());
  LossGrad r{sum_squares(diff) / n, RealGrid()};
  r.grad = iel_backward((2.0 / n) * diff, iel);
  return r;
}

inline double gen_loss(const RealGrid& output, const RealGrid& target, const IelConfig& iel) {
  return gen_loss_grad(output, target, iel).value;
}

/// Minimizes gen_loss over the corpus with IELs in the loss only.
inline TrainStats train_gen(ToyGenerator& g, const Corpus& corpus, const TrainSchedule& sched) {
  sched.validate();
  if (corpus.empty()) throw ConfigError("train_gen: corpus is empty");
  TrainStats stats;
  GenTape tape;
  for (int epoch = 1; epoch <= sched.epochs; ++epoch) {
    Rng rng(hash_combine(sched.seed, 0x67656eULL + static_cast<std::uint64_t>(epoch)));
    const auto batches = detail::make_batches(&corpus, sched.batch_size, rng);
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
      g.params.zero_grad();
      double total = 0.0;
      for (const SegSample* s : batch) {
        const RealGrid noise = generator_noise(sched.seed, s->index, s->label.height(), s->label.width());
        const RealGrid out = gen_forward(g, s->label, noise, &tape);
        LossGrad lg = gen_loss_grad(out, s->image, sched.iel);
        if (!std::isfinite(lg.value)) throw NumericError("generator loss is not finite");
        total += lg.value;
        gen_backward(g, tape, (1.0 / double(batch.size())) * lg.grad);
      }
      sgd_step(g.params, sched.learning_rate);
      loss_sum += total / double(batch.size());
      ++stats.steps;
      ++stats.source_steps;
    }
    stats.history.push_back({epoch, stats.steps, loss_sum / double(batches.size()), std::nullopt});
  }
  return stats;
}

/// Mean high-frequency energy of (reconstruction - image) with no IEL anywhere.
inline double evaluate_hf_residual(const ToyGenerator& g, const Corpus& corpus, std::uint64_t noise_seed,
                                   double radius_fraction = 0.5) {
  if (corpus.empty()) throw ConfigError("evaluate_hf_residual: corpus is empty");
  double sum = 0.0;
  for (const auto& s : corpus.samples) {
    const RealGrid noise = generator_noise(noise_seed, s.index, s.label.height(), s.label.width());
    sum += high_freq_energy(gen_forward(g, s.label, noise) - s.image, radius_fraction);
  }
  return sum / double(corpus.size());
}

}  // namespace ielkit
