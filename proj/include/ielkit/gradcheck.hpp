#pragma once

#include "ielkit/generator.hpp"

namespace ielkit {

// Miniature instances small enough to finite-difference every scalar.
struct MiniatureSpec {
  std::size_t size = 8;
  std::size_t classes = 3;
  std::size_t width = 2;  // channels per stage
  int iel_depth = 2;
  bool mff = true;
  bool iel_on_logits = false;
  std::uint64_t seed = 0;
};

namespace detail {

// Moves every parameter off its initial value so zero-initialized pieces
// (MFF projection, biases) carry non-trivial gradients.
inline void jitter_params(ParamStore& params, std::uint64_t seed, double scale) {
  Rng rng(hash_combine(seed, 0x6a6974ULL));
  for (auto& e : params)
    for (double& v : e.value) v += scale * rng.normal();
}

inline RealGrid uniform_grid(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  RealGrid g(c, h, w);
  for (double& v : g.data()) v = rng.uniform();
  return g;
}

inline LabelGrid uniform_labels(std::size_t h, std::size_t w, std::size_t classes, Rng& rng) {
  LabelGrid g(1, h, w);
  for (auto& v : g.data()) v = static_cast<std::int32_t>(rng.integer(0, static_cast<std::int64_t>(classes) - 1));
  return g;
}

}  // namespace detail

inline ToySegmenter miniature_segmenter(const MiniatureSpec& spec) {
  SegmenterConfig cfg;
  cfg.classes = spec.classes;
  cfg.channels.assign(3, spec.width);
  cfg.mff = spec.mff;
  cfg.iel_on_logits = spec.iel_on_logits;
  cfg.seed = spec.seed;
  ToySegmenter m = make_segmenter(cfg);
  detail::jitter_params(m.params, spec.seed, 0.3);
  return m;
}

/// Central differences over every segmenter parameter on the training path.
inline GradCheckReport segmenter_grad_check(const MiniatureSpec& spec, double epsilon = 1e-5,
                                            double tolerance = 1e-4) {
  ToySegmenter m = miniature_segmenter(spec);
  Rng rng(hash_combine(spec.seed, 0x696d67ULL));
  const RealGrid image = detail::uniform_grid(3, spec.size, spec.size, rng);
  const LabelGrid label = detail::uniform_labels(spec.size, spec.size, spec.classes, rng);
  const IelConfig iel{spec.iel_depth, 0.1, Padding::replicate};
  SegTape tape;
  LossFn loss = [&](ParamStore&) {
    LossGrad lg = seg_loss_grad(forward_train(m, image, iel, &tape), label);
    seg_backward(m, tape, std::move(lg.grad));
    return lg.value;
  };
  return finite_diff_grad_check(loss, m.params, epsilon, tolerance);
}

/// Same check for the generator under gen_loss.
inline GradCheckReport generator_grad_check(const MiniatureSpec& spec, double epsilon = 1e-5,
                                            double tolerance = 1e-4) {
  ToyGenerator g = make_generator({spec.classes, spec.width, spec.seed});
  detail::jitter_params(g.params, spec.seed, 0.3);
  Rng rng(hash_combine(spec.seed, 0x67656eULL));
  const LabelGrid label = detail::uniform_labels(spec.size, spec.size, spec.classes, rng);
  const RealGrid target = detail::uniform_grid(3, spec.size, spec.size, rng);
  const RealGrid noise = generator_noise(spec.seed, 0, spec.size, spec.size);
  const IelConfig iel{spec.iel_depth, 0.1, Padding::replicate};
  GenTape tape;
  LossFn loss = [&](ParamStore&) {
    LossGrad lg = gen_loss_grad(gen_forward(g, label, noise, &tape), target, iel);
    gen_backward(g, tape, std::move(lg.grad));
    return lg.value;
  };
  return finite_diff_grad_check(loss, g.params, epsilon, tolerance);
}

}  // namespace ielkit
