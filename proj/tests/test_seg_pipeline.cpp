#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ielkit/benchmark.hpp"
#include "ielkit/checkpoint.hpp"
#include "ielkit/gradcheck.hpp"
#include "test_util.hpp"

using namespace ielkit;
using ielkit::testing::random_grid;
namespace fs = std::filesystem;

namespace {

RealGrid random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  return random_grid(3, h, w, seed, 0.0, 1.0);
}

ToySegmenter small_model(bool mff = true, std::uint64_t seed = 1) {
  SegmenterConfig cfg;
  cfg.channels = {4, 4, 8};
  cfg.mff = mff;
  cfg.seed = seed;
  return make_segmenter(cfg);
}

Corpus small_corpus(std::size_t n, std::size_t first, DomainStyle style = DomainStyle::source()) {
  return gen_corpus(SceneSpec{5, default_classes(), 16}, style, n, first);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST(Segmenter, InferEqualsTrainAtDepthZero) {
  const auto m = small_model();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const RealGrid img = random_image(16, 16, s);
    EXPECT_EQ(forward_infer(m, img), forward_train(m, img, IelConfig{0}));
  }
}

TEST(Segmenter, DepthFiveChangesTrainingOutput) {
  const auto m = small_model();
  const RealGrid img = random_image(16, 16, 3);
  EXPECT_GT(max_abs_diff(forward_infer(m, img), forward_train(m, img, IelConfig{5})), 0.0);
}

TEST(Segmenter, ConstantImageGivesConstantLogits) {
  auto m = small_model();
  const RealGrid img(3, 16, 16, 0.4);
  for (const RealGrid& logits : {forward_infer(m, img), forward_train(m, img, IelConfig{5})})
    for (std::size_t c = 0; c < logits.channels(); ++c) {
      const auto p = logits.plane(c);
      for (double v : p) EXPECT_NEAR(v, p[0], 1e-12);
    }
  auto& head = m.params["head.weight"].value;
  std::fill(head.begin(), head.end(), 0.0);
  const RealGrid z = forward_train(m, random_image(16, 16, 9), IelConfig{5});
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Segmenter, InferenceGraphHasNoIel) {
  auto m = small_model();
  SegTape tape;
  forward_infer(m, random_image(16, 16, 1), &tape);
  EXPECT_EQ(count_iel_nodes(tape), 0u);
  forward_train(m, random_image(16, 16, 1), IelConfig{5}, &tape);
  EXPECT_EQ(count_iel_nodes(tape), 3u);
  forward_train(m, random_image(16, 16, 1), IelConfig{0}, &tape);
  EXPECT_EQ(count_iel_nodes(tape), 0u);
  m.cfg.iel_on_logits = true;
  forward_train(m, random_image(16, 16, 1), IelConfig{5}, &tape);
  EXPECT_EQ(count_iel_nodes(tape), 4u);
}

TEST(Segmenter, InferenceIgnoresTrainingIelSetting) {
  // Same parameters, different IEL histories: forward_infer only sees values.
  auto a = small_model(true, 4), b = small_model(true, 4);
  const auto src = small_corpus(4, 0), gen = small_corpus(4, 50, DomainStyle::generated());
  TrainSchedule s;
  s.epochs = 1;
  s.iel.depth = 5;
  train_seg(a, src, &gen, s);
  b.params = a.params;
  b.cfg.iel_on_logits = true;
  const RealGrid img = random_image(16, 16, 2);
  EXPECT_EQ(forward_infer(a, img), forward_infer(b, img));
}

TEST(Segmenter, ShapeErrors) {
  const auto m = small_model();
  EXPECT_THROW(forward_infer(m, random_image(12, 16, 0)), ShapeError);
  EXPECT_THROW(forward_infer(m, RealGrid(1, 16, 16)), ShapeError);
  EXPECT_THROW(forward_train(m, random_image(16, 16, 0), IelConfig{-1}), ConfigError);
}

TEST(Segmenter, PredictionsAreValidAndDeterministic) {
  const auto m = small_model(false);
  const RealGrid img = random_image(16, 16, 5);
  const LabelGrid p = predict(m, img);
  EXPECT_EQ(p, predict(m, img));
  for (auto v : p.data()) {
    EXPECT_GE(v, 0);
    EXPECT_LT(v, 6);
  }
}

TEST(SegLoss, ClosedForms) {
  LabelGrid label(1, 3, 3, 2);
  EXPECT_NEAR(seg_loss(RealGrid(4, 3, 3), label), std::log(4.0), 1e-15);
  RealGrid margin(4, 3, 3);
  for (std::size_t i = 0; i < 9; ++i) margin(2, i / 3, i % 3) = 30.0;
  EXPECT_LT(seg_loss(margin, label), 1e-9);
  label[4] = 4;
  EXPECT_THROW(seg_loss(margin, label), DataError);
  EXPECT_THROW(seg_loss(margin, LabelGrid(1, 2, 3)), ShapeError);
}

TEST(SegLoss, LargeLogitsStayFinite) {
  RealGrid logits(3, 1, 2);
  logits[0] = 1000.0;
  logits[3] = -1000.0;
  const double l = seg_loss(logits, LabelGrid(1, 1, 2, std::vector<std::int32_t>{1, 1}));
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, 1000.0 + 0.5 * std::log(2.0), 1e-9);
}

TEST(SegLoss, GradientMatchesFiniteDifferences) {
  ParamStore store;
  const auto id = store.add("logits", {4, 3, 5});
  const RealGrid init = random_grid(4, 3, 5, 77, -2.0, 2.0);
  std::copy(init.data().begin(), init.data().end(), store.value(id).begin());
  LabelGrid label(1, 3, 5);
  for (std::size_t i = 0; i < label.size(); ++i) label[i] = static_cast<std::int32_t>((i * 7) % 4);
  LossFn loss = [&](ParamStore& p) {
    const RealGrid logits(4, 3, 5, std::vector<double>(p.value(id).begin(), p.value(id).end()));
    LossGrad lg = seg_loss_grad(logits, label);
    p.accumulate(id, lg.grad.data());
    return lg.value;
  };
  EXPECT_TRUE(finite_diff_grad_check(loss, store, 1e-5, 1e-6).pass);
}

TEST(GradCheck, MiniatureSegmenter) {
  for (bool mff : {true, false})
    for (int depth : {0, 2}) {
      MiniatureSpec spec;
      spec.mff = mff;
      spec.iel_depth = depth;
      const auto r = segmenter_grad_check(spec);
      for (const auto& p : r.params) EXPECT_LT(p.max_rel_error, 1e-4) << p.name << " mff=" << mff << " d=" << depth;
      EXPECT_TRUE(r.pass);
    }
}

TEST(GradCheck, MiniatureSegmenterIelOnLogits) {
  // Seed 3 is avoided on purpose: one fused bin sits 3e-5 from a real-axis
  // sign flip, where the mixed phase jumps and central differences diverge.
  for (std::uint64_t seed : {0, 1, 2}) {
    MiniatureSpec spec;
    spec.iel_on_logits = true;
    spec.seed = seed;
    EXPECT_TRUE(segmenter_grad_check(spec).pass) << seed;
  }
}

TEST(GradCheck, MiniatureGenerator) {
  MiniatureSpec spec;
  spec.iel_depth = 3;
  const auto r = generator_grad_check(spec);
  for (const auto& p : r.params) EXPECT_LT(p.max_rel_error, 1e-4) << p.name;
}

TEST(TrainSeg, SourceOnlyAndMissingGenerated) {
  auto m = small_model(false);
  const auto src = small_corpus(4, 0);
  TrainSchedule s;
  s.mff = false;
  s.epochs = 1;
  EXPECT_THROW(train_seg(m, src, nullptr, s), ConfigError);
  s.mixing = Mixing::source_only;
  const auto stats = train_seg(m, src, nullptr, s);
  EXPECT_EQ(stats.generated_steps, 0u);
  EXPECT_EQ(stats.source_steps, 1u);
  s.mff = true;
  EXPECT_THROW(train_seg(m, src, nullptr, s), ConfigError);
}

TEST(TrainSeg, AlternationIsExact) {
  auto m = small_model(false);
  const auto src = small_corpus(6, 0), gen = small_corpus(6, 100, DomainStyle::generated());
  TrainSchedule s;
  s.mff = false;
  s.epochs = 2;
  s.batch_size = 2;
  const auto stats = train_seg(m, src, &gen, s);
  EXPECT_EQ(stats.steps, 12u);
  EXPECT_EQ(stats.generated_steps * 2, stats.steps);
}

TEST(TrainSeg, BitExactRepeat) {
  const auto src = small_corpus(4, 0), gen = small_corpus(4, 100, DomainStyle::generated());
  const auto val = small_corpus(2, 200, DomainStyle::shifted());
  TrainSchedule s;
  s.epochs = 2;
  s.batch_size = 2;
  s.iel.depth = 3;
  auto a = small_model(), b = small_model();
  const auto ha = train_seg(a, src, &gen, s, &val), hb = train_seg(b, src, &gen, s, &val);
  EXPECT_TRUE(a.params == b.params);
  ASSERT_EQ(ha.history.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(ha.history[i].loss, hb.history[i].loss);
    EXPECT_EQ(ha.history[i].val_miou, hb.history[i].val_miou);
  }
  const auto dir = fs::temp_directory_path();
  write_history_csv(dir / "ielkit_hist_a.csv", ha.history);
  write_history_csv(dir / "ielkit_hist_b.csv", hb.history);
  const std::string ca = slurp(dir / "ielkit_hist_a.csv"), cb = slurp(dir / "ielkit_hist_b.csv");
  EXPECT_FALSE(ca.empty());
  EXPECT_EQ(ca, cb);
}

// Regression guard measured once on the default benchmark, seed 0, MFF on, depth 0.
TEST(TrainSeg, DefaultConfigLossDecreasesOverThreeEpochs) {
  BenchmarkConfig cfg;
  cfg.seg.epochs = 3;
  const auto run = run_segmenter(cfg, benchmark_data(cfg, 0), 0, 0, true);
  ASSERT_EQ(run.stats.history.size(), 3u);
  const double pinned[3] = {1.3696645144473401, 1.201192407735781, 1.1577793223504134};
  for (std::size_t e = 0; e < 3; ++e) EXPECT_NEAR(run.stats.history[e].loss, pinned[e], 1e-9 * pinned[e]);
  EXPECT_LT(run.stats.history[1].loss, run.stats.history[0].loss);
  EXPECT_LT(run.stats.history[2].loss, run.stats.history[1].loss);
}

TEST(GenLoss, Identities) {
  const RealGrid a = random_grid(3, 8, 8, 1), b = random_grid(3, 8, 8, 2);
  EXPECT_EQ(gen_loss(a, a, IelConfig{5}), 0.0);
  EXPECT_NEAR(gen_loss(a, b, IelConfig{0}), sum_squares(a - b) / double(a.size()), 1e-15);
  for (int d : {1, 5, 20}) {
    const IelConfig cfg{d};
    const RealGrid diff = iel_apply(a - b, cfg);
    EXPECT_NEAR(gen_loss(a, b, cfg), sum_squares(diff) / double(a.size()), 1e-10 * std::max(1.0, sum_squares(diff)));
  }
  EXPECT_THROW(gen_loss(a, RealGrid(3, 8, 4), IelConfig{}), ShapeError);
}

TEST(Generator, OutputInUnitIntervalAndDeterministic) {
  const auto g = make_generator({6, 8, 3});
  const auto s = gen_scene(SceneSpec{1, default_classes(), 16}, DomainStyle::source(), 0);
  const RealGrid noise = generator_noise(3, 0, 16, 16);
  const RealGrid out = gen_forward(g, s.label, noise);
  EXPECT_EQ(out, gen_forward(g, s.label, noise));
  for (double v : out.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(noise, generator_noise(3, 0, 16, 16));
  EXPECT_NE(noise, generator_noise(3, 1, 16, 16));
  LabelGrid bad = s.label;
  bad[0] = 9;
  EXPECT_THROW(gen_forward(g, bad, noise), DataError);
}

TEST(Generator, TrainingDeterministicAndFiniteAtDepthTwenty) {
  const auto corpus = small_corpus(4, 0);
  TrainSchedule s;
  s.epochs = 2;
  s.batch_size = 2;
  s.iel.depth = 20;
  s.learning_rate = 1e-9;
  auto a = make_generator({6, 4, 1}), b = make_generator({6, 4, 1});
  const auto ha = train_gen(a, corpus, s), hb = train_gen(b, corpus, s);
  EXPECT_TRUE(a.params == b.params);
  for (const auto& r : ha.history) EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_EQ(ha.history.back().loss, hb.history.back().loss);
  EXPECT_GE(evaluate_hf_residual(a, corpus, 1), 0.0);
}

TEST(Checkpoint, RoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "ielkit_test_ckpt";
  fs::remove_all(dir);
  auto m = small_model();
  detail::jitter_params(m.params, 3, 0.5);
  save_checkpoint(dir / "m.ckpt", m.params);
  auto fresh = small_model();
  EXPECT_FALSE(fresh.params == m.params);
  load_checkpoint(dir / "m.ckpt", fresh.params);
  EXPECT_TRUE(fresh.params == m.params);

  auto other = small_model(false);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", other.params), DataError);
  std::string bytes = slurp(dir / "m.ckpt");
  {
    std::ofstream f(dir / "cut.ckpt", std::ios::binary);
    f << bytes.substr(0, bytes.size() - 3);
  }
  EXPECT_THROW(load_checkpoint(dir / "cut.ckpt", fresh.params), DataError);
  EXPECT_THROW(load_checkpoint(dir / "none.ckpt", fresh.params), DataError);
  EXPECT_EQ(bytes.rfind("ielkit-checkpoint 1\n", 0), 0u);
  fs::remove_all(dir);
}

TEST(History, CsvLayout) {
  const fs::path p = fs::temp_directory_path() / "ielkit_test_history.csv";
  write_history_csv(p, {{1, 4, 0.5, 0.25}, {2, 8, 0.125, std::nullopt}});
  EXPECT_EQ(slurp(p), "epoch,step,loss,val_miou\r\n1,4,0.5,0.25\r\n2,8,0.125,\r\n");
  fs::remove(p);
}
