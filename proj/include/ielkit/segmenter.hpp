#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ielkit/conv.hpp"
#include "ielkit/iel.hpp"
#include "ielkit/metrics.hpp"
#include "ielkit/mff.hpp"
#include "ielkit/params.hpp"
#include "ielkit/rng.hpp"
#include "ielkit/synth.hpp"

namespace ielkit {

struct ConvSlot {
  std::size_t weight = 0, bias = 0;
  ConvShape shape;
};

// LeCun-normal weights, zero bias. Each tensor gets its own stream so adding a
// layer does not reshuffle the others.
inline ConvSlot conv_register(ParamStore& store, const std::string& name, ConvShape shape,
                              std::uint64_t seed, double gain = 1.0) {
  ConvSlot s{store.add(name + ".weight", {shape.out_channels, shape.in_channels, shape.kernel,
                                          shape.kernel}),
             store.add(name + ".bias", {shape.out_channels}), shape};
  Rng rng(hash_combine(seed, hash_string(name)));
  const double scale = gain / std::sqrt(static_cast<double>(shape.in_channels * shape.kernel * shape.kernel));
  for (double& w : store.value(s.weight)) w = scale * rng.normal();
  return s;
}

inline RealGrid conv_forward(const ParamStore& store, const ConvSlot& s, const RealGrid& in,
                             Padding padding = Padding::replicate) {
  return conv2d(in, store.value(s.weight), store.value(s.bias), s.shape, padding);
}

// Accumulates weight/bias gradients and returns the input gradient.
inline RealGrid conv_backward(ParamStore& store, const ConvSlot& s, const RealGrid& in,
                              const RealGrid& grad_out, Padding padding = Padding::replicate) {
  auto g = conv2d_backward(in, store.value(s.weight), s.shape, padding, grad_out);
  store.accumulate(s.weight, g.weights);
  store.accumulate(s.bias, g.bias);
  return std::move(g.input);
}

struct SegmenterConfig {
  std::size_t classes = 6;
  std::vector<std::size_t> channels{8, 16, 32};  // one entry per scale
  bool mff = true;
  bool iel_on_logits = false;
  std::uint64_t seed = 0;

  std::size_t scales() const { return channels.size(); }
  void validate() const {
    if (classes < 2) throw ConfigError("segmenter needs at least 2 classes");
    if (channels.empty()) throw ConfigError("segmenter needs at least one scale");
    for (auto c : channels)
      if (c == 0) throw ConfigError("segmenter channel counts must be positive");
  }
};

struct ToySegmenter {
  SegmenterConfig cfg;
  ParamStore params;
  std::vector<ConvSlot> encoder, decoder;
  std::vector<MffSlots> fusion;  // empty when MFF is disabled
  ConvSlot head;
};

inline ToySegmenter make_segmenter(const SegmenterConfig& cfg) {
  cfg.validate();
  ToySegmenter m;
  m.cfg = cfg;
  const std::size_t S = cfg.scales();
  std::size_t in = 3;
  for (std::size_t i = 0; i < S; ++i) {
    m.encoder.push_back(conv_register(m.params, "enc" + std::to_string(i), {cfg.channels[i], in, 3}, cfg.seed));
    in = cfg.channels[i];
  }
  // Decoder stage i fuses the deeper map with skip i, then maps to the width
  // of the next skip (stage 0 keeps its width).
  for (std::size_t i = 0; i < S; ++i) {
    const std::size_t out = i == 0 ? cfg.channels[0] : cfg.channels[i - 1];
    m.decoder.push_back(conv_register(m.params, "dec" + std::to_string(i), {out, cfg.channels[i], 3}, cfg.seed));
    if (cfg.mff) m.fusion.push_back(mff_register(m.params, "mff" + std::to_string(i), cfg.channels[i]));
  }
  m.head = conv_register(m.params, "head", {cfg.classes, cfg.channels[0], 1}, cfg.seed);
  return m;
}

// Intermediate values of one forward pass, plus the op trace.
struct SegTape {
  std::vector<RealGrid> enc_in, skip;      // per scale
  std::vector<RealGrid> lower, fused, dec;  // per scale, dec = post-tanh
  std::vector<MffCache> mff;
  RealGrid head_in;
  std::vector<std::string> trace;
  std::optional<IelConfig> iel;
};

inline void check_seg_input(const ToySegmenter& m, const RealGrid& image) {
  if (image.channels() != 3) throw ShapeError("segmenter input must have 3 channels, got " + image.shape_string());
  const std::size_t f = std::size_t{1} << m.cfg.scales();
  if (image.height() % f || image.width() % f || image.height() == 0 || image.width() == 0)
    throw ShapeError("segmenter input " + image.shape_string() + " not divisible by " + std::to_string(f));
}

namespace detail {

inline RealGrid seg_forward(const ToySegmenter& m, const RealGrid& image, const IelConfig* iel,
                            SegTape& t) {
  check_seg_input(m, image);
  if (iel) iel->validate();
  const std::size_t S = m.cfg.scales();
  const bool use_iel = iel && iel->depth > 0;
  t = SegTape{};
  if (use_iel) t.iel = *iel;
  t.enc_in.resize(S);
  t.skip.resize(S);
  t.lower.resize(S);
  t.fused.resize(S);
  t.dec.resize(S);
  t.mff.resize(S);

  RealGrid x = image;
  for (std::size_t i = 0; i < S; ++i) {
    t.enc_in[i] = x;
    t.skip[i] = tanh_act(conv_forward(m.params, m.encoder[i], x));
    t.trace.push_back("enc" + std::to_string(i));
    x = avg_pool2(t.skip[i]);
    t.trace.push_back("pool" + std::to_string(i));
  }
  for (std::size_t k = 0; k < S; ++k) {
    const std::size_t i = S - 1 - k;
    t.lower[i] = x;
    if (m.cfg.mff) {
      t.fused[i] = mff_forward(x, t.skip[i], mff_params_from(m.params, m.fusion[i]), &t.mff[i]);
      t.trace.push_back("mff" + std::to_string(i));
    } else {
      t.fused[i] = upsample2x(x) + t.skip[i];
      t.trace.push_back("upsample_add" + std::to_string(i));
    }
    t.dec[i] = tanh_act(conv_forward(m.params, m.decoder[i], t.fused[i]));
    t.trace.push_back("dec" + std::to_string(i));
    if (use_iel) {
      x = iel_apply(t.dec[i], *iel);
      t.trace.push_back("iel" + std::to_string(i));
    } else {
      x = t.dec[i];
    }
  }
  t.head_in = x;
  RealGrid logits = conv_forward(m.params, m.head, x, Padding::zero);
  t.trace.push_back("head");
  if (use_iel && m.cfg.iel_on_logits) {
    logits = iel_apply(std::move(logits), *iel);
    t.trace.push_back("iel_logits");
  }
  return logits;
}

}  // namespace detail

/// Training-path forward: IEL stacks after every decoder stage.
inline RealGrid forward_train(const ToySegmenter& m, const RealGrid& image, const IelConfig& iel,
                              SegTape* tape = nullptr) {
  SegTape local;
  return detail::seg_forward(m, image, &iel, tape ? *tape : local);
}

/// Inference forward: same network with no IEL on the path.
inline RealGrid forward_infer(const ToySegmenter& m, const RealGrid& image, SegTape* tape = nullptr) {
  SegTape local;
  return detail::seg_forward(m, image, nullptr, tape ? *tape : local);
}

inline std::size_t count_iel_nodes(const SegTape& t) {
  return static_cast<std::size_t>(std::count_if(t.trace.begin(), t.trace.end(),
                                                [](const std::string& op) { return op.rfind("iel", 0) == 0; }));
}

/// Accumulates parameter gradients for the pass recorded in `t`.
inline void seg_backward(ToySegmenter& m, const SegTape& t, RealGrid grad_logits) {
  const std::size_t S = m.cfg.scales();
  if (t.iel && m.cfg.iel_on_logits) grad_logits = iel_backward(grad_logits, *t.iel);
  RealGrid g = conv_backward(m.params, m.head, t.head_in, grad_logits, Padding::zero);

  std::vector<RealGrid> g_skip(S);
  for (std::size_t i = 0; i < S; ++i) {
    if (t.iel) g = iel_backward(g, *t.iel);
    g = tanh_backward(t.dec[i], std::move(g));
    g = conv_backward(m.params, m.decoder[i], t.fused[i], g);
    if (m.cfg.mff) {
      const MffGrads mg = mff_backward(t.mff[i], mff_params_from(m.params, m.fusion[i]), g);
      mff_accumulate(m.params, m.fusion[i], mg);
      g_skip[i] = mg.hr;
      g = mg.lr;
    } else {
      g_skip[i] = g;
      g = upsample2x_backward(g);
    }
  }
  // g now holds the bottleneck gradient.
  for (std::size_t k = 0; k < S; ++k) {
    const std::size_t i = S - 1 - k;
    RealGrid gs = avg_pool2_backward(g);
    gs += g_skip[i];
    gs = tanh_backward(t.skip[i], std::move(gs));
    g = conv_backward(m.params, m.encoder[i], t.enc_in[i], gs);
  }
}

struct LossGrad {
  double value = 0.0;
  RealGrid grad;
};

/// Mean pixel cross-entropy with max-subtracted log-sum-exp.
inline LossGrad seg_loss_grad(const RealGrid& logits, const LabelGrid& label) {
  if (label.channels() != 1 || label.height() != logits.height() || label.width() != logits.width())
    throw ShapeError("seg_loss: label " + label.shape_string() + " vs logits " + logits.shape_string());
  const std::size_t C = logits.channels(), P = logits.plane_size();
  LossGrad r{0.0, RealGrid(C, logits.height(), logits.width())};
  std::vector<double> e(C);
  for (std::size_t p = 0; p < P; ++p) {
    const auto y = label[p];
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw DataError("seg_loss: label " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
    double mx = -INFINITY;
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits[c * P + p]);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) sum += e[c] = std::exp(logits[c * P + p] - mx);
    r.value += mx + std::log(sum) - logits[static_cast<std::size_t>(y) * P + p];
    for (std::size_t c = 0; c < C; ++c)
      r.grad[c * P + p] = (e[c] / sum - (c == static_cast<std::size_t>(y) ? 1.0 : 0.0)) / double(P);
  }
  r.value /= double(P);
  return r;
}

inline double seg_loss(const RealGrid& logits, const LabelGrid& label) {
  return seg_loss_grad(logits, label).value;
}

inline LabelGrid argmax_labels(const RealGrid& logits) {
  const std::size_t C = logits.channels(), P = logits.plane_size();
  LabelGrid out(1, logits.height(), logits.width());
  for (std::size_t p = 0; p < P; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (logits[c * P + p] > logits[best * P + p]) best = c;
    out[p] = static_cast<std::int32_t>(best);
  }
  return out;
}

inline LabelGrid predict(const ToySegmenter& m, const RealGrid& image) {
  return argmax_labels(forward_infer(m, image));
}

/// Dataset-level mIoU (one confusion matrix over all pixels) with the
/// inference path.
inline IouResult evaluate_miou(const ToySegmenter& m, const Corpus& corpus) {
  ConfusionMatrix cm(m.cfg.classes);
  for (const auto& s : corpus.samples) cm.accumulate(predict(m, s.image), s.label);
  return iou_from(cm);
}

enum class Mixing { alternate, source_only };

inline const char* to_string(Mixing m) { return m == Mixing::alternate ? "alternate" : "source-only"; }

inline Mixing mixing_from_string(const std::string& s) {
  if (s == "alternate") return Mixing::alternate;
  if (s == "source-only" || s == "source_only") return Mixing::source_only;
  throw ConfigError("mixing must be 'alternate' or 'source-only', got '" + s + "'");
}

struct TrainSchedule {
  int epochs = 3;
  std::size_t batch_size = 4;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  IelConfig iel;
  bool mff = true;
  Mixing mixing = Mixing::alternate;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning rate must be positive");
    iel.validate();
  }
};

struct HistoryRow {
  int epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  std::optional<double> val_miou;
};

struct TrainStats {
  std::vector<HistoryRow> history;
  std::size_t steps = 0;
  std::size_t source_steps = 0;
  std::size_t generated_steps = 0;
};

namespace detail {

using Batch = std::vector<const SegSample*>;

inline std::vector<Batch> make_batches(const Corpus* c, std::size_t batch, Rng& rng) {
  std::vector<Batch> out;
  if (!c || c->empty()) return out;
  std::vector<std::size_t> order(c->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
  for (std::size_t i = 0; i < order.size(); i += batch) {
    Batch b;
    for (std::size_t j = i; j < std::min(order.size(), i + batch); ++j) b.push_back(&c->samples[order[j]]);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace detail

/// One gradient step on a batch; returns the batch-mean loss.
inline double seg_train_step(ToySegmenter& m, const std::vector<const SegSample*>& batch,
                             const TrainSchedule& sched) {
  m.params.zero_grad();
  double total = 0.0;
  SegTape tape;
  for (const SegSample* s : batch) {
    const RealGrid logits = forward_train(m, s->image, sched.iel, &tape);
    LossGrad lg = seg_loss_grad(logits, s->label);
    if (!std::isfinite(lg.value)) throw NumericError("segmentation loss is not finite");
    total += lg.value;
    seg_backward(m, tape, (1.0 / double(batch.size())) * lg.grad);
  }
  sgd_step(m.params, sched.learning_rate);
  return total / double(batch.size());
}

/// Alternating source/generated training: odd steps draw source batches, even
/// steps generated ones. When one stream runs out the other finishes the epoch.
inline TrainStats train_seg(ToySegmenter& m, const Corpus& source, const Corpus* generated,
                            const TrainSchedule& sched, const Corpus* validation = nullptr) {
  sched.validate();
  if (sched.mff != m.cfg.mff) throw ConfigError("schedule and model disagree on MFF");
  if (source.empty()) throw ConfigError("train_seg: source corpus is empty");
  if (sched.mixing == Mixing::alternate && (!generated || generated->empty()))
    throw ConfigError("train_seg: alternate mixing needs a non-empty generated corpus");
  const Corpus* gen = sched.mixing == Mixing::alternate ? generated : nullptr;

  TrainStats stats;
  for (int epoch = 1; epoch <= sched.epochs; ++epoch) {
    Rng rng(hash_combine(sched.seed, static_cast<std::uint64_t>(epoch)));
    const auto src_batches = detail::make_batches(&source, sched.batch_size, rng);
    const auto gen_batches = detail::make_batches(gen, sched.batch_size, rng);
    std::size_t si = 0, gi = 0;
    double loss_sum = 0.0;
    std::size_t epoch_steps = 0;
    while (si < src_batches.size() || gi < gen_batches.size()) {
      const bool want_source = stats.steps % 2 == 0;  // step numbering is 1-based
      const bool take_source = gi >= gen_batches.size() || (want_source && si < src_batches.size());
      const auto& batch = take_source ? src_batches[si++] : gen_batches[gi++];
      loss_sum += seg_train_step(m, batch, sched);
      ++stats.steps;
      ++epoch_steps;
      ++(take_source ? stats.source_steps : stats.generated_steps);
    }
    HistoryRow row{epoch, stats.steps, loss_sum / double(epoch_steps), std::nullopt};
    if (validation && !validation->empty()) row.val_miou = evaluate_miou(m, *validation).mean;
    stats.history.push_back(row);
  }
  return stats;
}

}  // namespace ielkit
