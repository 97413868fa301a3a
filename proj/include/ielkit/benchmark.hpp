#pragma once

#include <string>
#include <vector>

#include "ielkit/checkpoint.hpp"
#include "ielkit/generator.hpp"

namespace ielkit {

// The default synthetic benchmark: clean source corpus, defect-injected
// "generated" corpus in a second style, and a held-out test set in a third.
struct BenchmarkConfig {
  SceneSpec scene;
  std::size_t source_n = 48;
  std::size_t generated_n = 48;
  std::size_t test_n = 32;
  DomainStyle source_style = DomainStyle::source();
  DomainStyle generated_style = DomainStyle::generated();
  DomainStyle test_style = DomainStyle::shifted();
  DefectConfig defects = DefectConfig::benchmark(0);
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t generator_width = 16;
  TrainSchedule seg;
  TrainSchedule gen;

  BenchmarkConfig() {
    seg.epochs = 8;
    gen.epochs = 8;
  }

  void validate() const {
    scene.validate();
    source_style.validate();
    generated_style.validate();
    test_style.validate();
    defects.validate();
    seg.validate();
    gen.validate();
    if (source_n == 0 || test_n == 0) throw ConfigError("benchmark corpora must be non-empty");
    if (seg.mixing == Mixing::alternate && generated_n == 0)
      throw ConfigError("alternate mixing needs generated_n >= 1");
  }
};

// Index ranges keep the four corpora of one seed disjoint.
inline constexpr std::size_t kGeneratedIndexBase = 1'000'000;
inline constexpr std::size_t kTestIndexBase = 2'000'000;
inline constexpr std::size_t kHeldOutIndexBase = 3'000'000;

struct BenchmarkData {
  Corpus source, generated, test, held_out;
};

/// Corpora for one seed; the seed moves scenes, defects and styles' noise.
inline BenchmarkData benchmark_data(const BenchmarkConfig& cfg, std::uint64_t seed) {
  SceneSpec spec = cfg.scene;
  spec.seed = hash_combine(cfg.scene.seed, seed);
  DefectConfig defects = cfg.defects;
  defects.seed = hash_combine(cfg.defects.seed, seed);
  BenchmarkData d;
  d.source = gen_corpus(spec, cfg.source_style, cfg.source_n, 0, Domain::source);
  if (cfg.generated_n > 0)
    d.generated = gen_corpus(spec, cfg.generated_style, cfg.generated_n, kGeneratedIndexBase,
                             Domain::generated, defects);
  d.test = gen_corpus(spec, cfg.test_style, cfg.test_n, kTestIndexBase, Domain::target);
  d.held_out = gen_corpus(spec, cfg.source_style, cfg.test_n, kHeldOutIndexBase, Domain::source);
  return d;
}

struct SegRun {
  ToySegmenter model;
  TrainStats stats;
  IouResult test;
  double boundary_f1 = 0.0;
  double label_tv = 0.0;  // predicted label transitions per pixel
};

struct GenRun {
  ToyGenerator model;
  TrainStats stats;
  double hf_residual = 0.0;
  double mmd = 0.0;
};

inline double label_transitions_per_pixel(const LabelGrid& l) {
  std::size_t n = 0;
  for (std::size_t y = 0; y < l.height(); ++y)
    for (std::size_t x = 0; x < l.width(); ++x) {
      if (x + 1 < l.width() && l(0, y, x) != l(0, y, x + 1)) ++n;
      if (y + 1 < l.height() && l(0, y, x) != l(0, y + 1, x)) ++n;
    }
  return double(n) / double(l.plane_size());
}

inline SegRun run_segmenter(const BenchmarkConfig& cfg, const BenchmarkData& data, std::uint64_t seed,
                            int depth, bool mff, bool with_validation = false) {
  SegmenterConfig mc;
  mc.classes = cfg.scene.class_count();
  mc.channels = cfg.channels;
  mc.mff = mff;
  mc.seed = seed;
  TrainSchedule sched = cfg.seg;
  sched.seed = hash_combine(cfg.seg.seed, seed);
  sched.mff = mff;
  sched.iel.depth = depth;
  SegRun r{make_segmenter(mc), {}, {}, 0.0, 0.0};
  r.stats = train_seg(r.model, data.source, data.generated.empty() ? nullptr : &data.generated, sched,
                      with_validation ? &data.test : nullptr);
  ConfusionMatrix cm(mc.classes);
  for (const auto& s : data.test.samples) {
    const LabelGrid pred = predict(r.model, s.image);
    cm.accumulate(pred, s.label);
    r.boundary_f1 += boundary_f1(pred, s.label, 1);
    r.label_tv += label_transitions_per_pixel(pred);
  }
  r.test = iou_from(cm);
  r.boundary_f1 /= double(data.test.size());
  r.label_tv /= double(data.test.size());
  return r;
}

inline GenRun run_generator(const BenchmarkConfig& cfg, const BenchmarkData& data, std::uint64_t seed,
                            int depth) {
  TrainSchedule sched = cfg.gen;
  sched.seed = hash_combine(cfg.gen.seed, seed);
  sched.iel.depth = depth;
  GenRun r{make_generator({cfg.scene.class_count(), cfg.generator_width, seed}), {}, 0.0, 0.0};
  r.stats = train_gen(r.model, data.source, sched);
  r.hf_residual = evaluate_hf_residual(r.model, data.held_out, sched.seed);
  std::vector<FeatureVector> fake, real;
  for (const auto& s : data.held_out.samples) {
    const RealGrid noise = generator_noise(sched.seed, s.index, s.label.height(), s.label.width());
    fake.push_back(pooled_embedding(gen_forward(r.model, s.label, noise)));
    real.push_back(pooled_embedding(s.image));
  }
  r.mmd = mmd(fake, real, median_bandwidth(fake, real));
  return r;
}

struct AblationRow {
  int depth = 0;
  std::uint64_t seed = 0;
  bool mff = true;
  double final_loss = 0.0;
  double val_miou = 0.0;
  double boundary_f1 = 0.0;
  double label_tv = 0.0;
  double gen_final_loss = 0.0;
  double gen_hf_residual = 0.0;
  double gen_mmd = 0.0;
};

inline const std::vector<std::string>& ablation_header() {
  static const std::vector<std::string> h{"depth", "seed", "mff", "final_loss", "val_miou", "boundary_f1",
                                          "label_tv", "gen_final_loss", "gen_hf_residual", "gen_mmd"};
  return h;
}

inline std::vector<std::string> ablation_fields(const AblationRow& r) {
  return {std::to_string(r.depth),      std::to_string(r.seed),        r.mff ? "1" : "0",
          format_real(r.final_loss),    format_real(r.val_miou),       format_real(r.boundary_f1),
          format_real(r.label_tv),      format_real(r.gen_final_loss), format_real(r.gen_hf_residual),
          format_real(r.gen_mmd)};
}

/// One row per (depth, seed): segmenter and generator both trained at that depth.
inline AblationRow ablation_cell(const BenchmarkConfig& cfg, const BenchmarkData& data, std::uint64_t seed,
                                 int depth, bool mff, bool with_generator = true) {
  AblationRow row;
  row.depth = depth;
  row.seed = seed;
  row.mff = mff;
  const SegRun s = run_segmenter(cfg, data, seed, depth, mff);
  row.final_loss = s.stats.history.back().loss;
  row.val_miou = s.test.mean;
  row.boundary_f1 = s.boundary_f1;
  row.label_tv = s.label_tv;
  if (with_generator) {
    const GenRun g = run_generator(cfg, data, seed, depth);
    row.gen_final_loss = g.stats.history.back().loss;
    row.gen_hf_residual = g.hf_residual;
    row.gen_mmd = g.mmd;
  }
  return row;
}

}  // namespace ielkit
