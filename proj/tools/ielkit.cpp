#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>

#include "ielkit/config.hpp"
#include "ielkit/gradcheck.hpp"

#ifndef IELKIT_VERSION
#define IELKIT_VERSION "v0.0.0-unknown"
#endif

using namespace ielkit;

namespace {

// Flag values that override the config file when given.
struct Overrides {
  std::string config;
  std::optional<std::string> out, source, generated, test, input, checkpoint, domain, depths, boundary, mixing;
  std::optional<std::uint64_t> seed;
  std::optional<int> iel_depth, epochs, seeds;
  std::optional<double> iel_tau, lr;
  std::optional<std::size_t> n, size, batch_size;
  std::optional<bool> mff, iel_on_logits;
  std::vector<std::string> categories;
  std::optional<std::string> context;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "key=value config file with [section] headers");
  app->add_option("--out", o.out, "output directory (default ielkit-out)");
  app->add_option("--seed", o.seed, "run seed (default 0)");
  app->add_option("--iel-depth", o.iel_depth, "IEL stack depth, 0..64 (default 0)");
  app->add_option("--iel-tau", o.iel_tau, "IEL step size, (0, 0.5] (default 0.1)");
  app->add_option("--iel-boundary", o.boundary, "replicate|periodic (default replicate)");
}

void add_training(CLI::App* app, Overrides& o) {
  app->add_option("--epochs", o.epochs, "training epochs (default 8)");
  app->add_option("--lr", o.lr, "learning rate (default 0.05)");
  app->add_option("--batch-size", o.batch_size, "batch size (default 4)");
  app->add_option("--size", o.size, "scene size in pixels (default 64)");
  app->add_option("--source", o.source, "source corpus directory (default: generated in memory)");
  app->add_option("--generated", o.generated, "generated corpus directory (default: generated in memory)");
  app->add_option("--test", o.test, "test corpus directory (default: generated in memory)");
  app->add_option("--mff", o.mff, "enable multi-scale frequency fusion (default true)");
  app->add_option("--iel-on-logits", o.iel_on_logits, "also apply IELs to the logits (default false)");
  app->add_option("--mixing", o.mixing, "alternate|source-only (default alternate)");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : parse_config(o.config);
  if (o.out) c.out = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.iel_depth) c.iel.depth = *o.iel_depth;
  if (o.iel_tau) c.iel.tau = *o.iel_tau;
  if (o.boundary) c.iel.boundary = padding_from_string(*o.boundary);
  if (o.epochs) c.bench.seg.epochs = c.bench.gen.epochs = *o.epochs;
  if (o.lr) c.bench.seg.learning_rate = c.bench.gen.learning_rate = *o.lr;
  if (o.batch_size) c.bench.seg.batch_size = c.bench.gen.batch_size = *o.batch_size;
  if (o.size) c.bench.scene.size = *o.size;
  if (o.n) c.n = *o.n;
  if (o.domain) c.domain = domain_from_string(*o.domain);
  if (o.depths) c.depths = parse_int_list(*o.depths, "--depths");
  if (o.seeds) c.seeds = *o.seeds;
  if (o.mff) c.bench.seg.mff = *o.mff;
  if (o.iel_on_logits) c.iel_on_logits = *o.iel_on_logits;
  if (o.mixing) c.bench.seg.mixing = mixing_from_string(*o.mixing);
  if (o.source) c.source_dir = *o.source;
  if (o.generated) c.generated_dir = *o.generated;
  if (o.test) c.test_dir = *o.test;
  if (o.input) c.input_dir = *o.input;
  if (o.checkpoint) c.checkpoint = *o.checkpoint;
  c.sync();
  c.validate();
  c.check_paths();
  return c;
}

void write_run_manifest(const RunConfig& c, const std::string& command, int argc, char** argv) {
  KeyValues kv{{"command", command}, {"version", IELKIT_VERSION}, {"seed", std::to_string(c.seed)}};
  std::string args;
  for (int i = 1; i < argc; ++i) args += (i > 1 ? " " : "") + std::string(argv[i]);
  kv.emplace_back("argv", args);
  for (auto& [k, v] : config_echo(c)) kv.emplace_back("config." + k, v);
  write_key_values(c.out / "run_manifest.txt", kv);
}

SceneSpec scene_of(const RunConfig& c) {
  SceneSpec s = c.bench.scene;
  s.seed = c.seed;
  return s;
}

// Corpora come from disk when a directory is given, else from the benchmark recipe.
BenchmarkData load_data(const RunConfig& c) {
  BenchmarkData d = benchmark_data(c.bench, 0);
  if (!c.source_dir.empty()) d.source = read_corpus(c.source_dir);
  if (!c.generated_dir.empty()) d.generated = read_corpus(c.generated_dir);
  if (!c.test_dir.empty()) d.test = read_corpus(c.test_dir);
  for (const Corpus* corpus : {&d.source, &d.generated, &d.test})
    if (!corpus->empty() && corpus->spec.classes != c.bench.scene.classes)
      throw DataError("corpus class list does not match the configured classes");
  return d;
}

SegmenterConfig segmenter_config(const RunConfig& c) {
  SegmenterConfig m;
  m.classes = c.bench.scene.class_count();
  m.channels = c.bench.channels;
  m.mff = c.bench.seg.mff;
  m.iel_on_logits = c.iel_on_logits;
  m.seed = c.seed;
  return m;
}

int cmd_gen_data(const RunConfig& c) {
  DomainStyle style = c.bench.source_style;
  std::optional<DefectConfig> defects;
  std::size_t first = 0;
  if (c.domain == Domain::generated) {
    style = c.bench.generated_style;
    defects = c.bench.defects;
    first = kGeneratedIndexBase;
  } else if (c.domain == Domain::target) {
    style = c.bench.test_style;
    first = kTestIndexBase;
  }
  const Corpus corpus = gen_corpus(scene_of(c), style, c.n, first, c.domain, defects);
  write_corpus(c.out, corpus);
  std::printf("wrote %zu samples to %s\n", corpus.size(), c.out.string().c_str());
  return 0;
}

int cmd_inject(const RunConfig& c) {
  if (c.input_dir.empty()) throw UsageError("inject needs --in <corpus dir>");
  Corpus corpus = read_corpus(c.input_dir);
  // Instances are not stored on disk; regenerate them and insist they agree.
  for (auto& s : corpus.samples) {
    const SegSample fresh = gen_scene(corpus.spec, corpus.style, s.index, corpus.domain);
    if (fresh.label != s.label)
      throw DataError("sample " + std::to_string(s.index) + " does not match its manifest recipe");
    s.instances = fresh.instances;
    s = inject_defects(std::move(s), corpus.spec.classes, c.bench.defects);
  }
  corpus.defects = c.bench.defects;
  corpus.domain = Domain::generated;
  write_corpus(c.out, corpus);
  std::printf("injected defects into %zu samples\n", corpus.size());
  return 0;
}

int cmd_train_seg(const RunConfig& c) {
  const BenchmarkData d = load_data(c);
  ToySegmenter m = make_segmenter(segmenter_config(c));
  TrainSchedule sched = c.bench.seg;
  sched.seed = c.seed;
  const TrainStats stats = train_seg(m, d.source, d.generated.empty() ? nullptr : &d.generated, sched, &d.test);
  save_checkpoint(c.out / "segmenter.ckpt", m.params);
  write_history_csv(c.out / "history.csv", stats.history);
  std::printf("steps=%zu final_loss=%s test_miou=%s\n", stats.steps, format_real(stats.history.back().loss).c_str(),
              format_real(*stats.history.back().val_miou).c_str());
  return 0;
}

int cmd_train_gen(const RunConfig& c) {
  const BenchmarkData d = load_data(c);
  ToyGenerator g = make_generator({c.bench.scene.class_count(), c.bench.generator_width, c.seed});
  TrainSchedule sched = c.bench.gen;
  sched.seed = c.seed;
  const TrainStats stats = train_gen(g, d.source, sched);
  save_checkpoint(c.out / "generator.ckpt", g.params);
  write_history_csv(c.out / "history.csv", stats.history);
  const double hf = evaluate_hf_residual(g, d.held_out, sched.seed);
  write_key_values(c.out / "summary.txt",
                   {{"final_loss", format_real(stats.history.back().loss)}, {"hf_residual", format_real(hf)}});
  std::printf("final_loss=%s hf_residual=%s\n", format_real(stats.history.back().loss).c_str(),
              format_real(hf).c_str());
  return 0;
}

int cmd_eval(const RunConfig& c) {
  if (c.checkpoint.empty()) throw UsageError("eval needs --checkpoint");
  const BenchmarkData d = load_data(c);
  ToySegmenter m = make_segmenter(segmenter_config(c));
  load_checkpoint(c.checkpoint, m.params);
  CsvWriter csv(c.out / "metrics.csv");
  csv.row({"sample", "miou", "boundary_f1", "hf_ratio", "label_tv"});
  ConfusionMatrix cm(m.cfg.classes);
  double bf = 0.0, hf = 0.0, tv = 0.0;
  std::vector<FeatureVector> emb_pred, emb_gt;
  for (const auto& s : d.test.samples) {
    const RealGrid logits = forward_infer(m, s.image);
    const LabelGrid pred = argmax_labels(logits);
    cm.accumulate(pred, s.label);
    const double sb = boundary_f1(pred, s.label, 1), sh = high_freq_energy_ratio(logits, 0.5);
    const double st = label_transitions_per_pixel(pred);
    bf += sb;
    hf += sh;
    tv += st;
    csv.row({std::to_string(s.index), format_real(miou(pred, s.label, m.cfg.classes).mean), format_real(sb),
             format_real(sh), format_real(st)});
  }
  const double n = double(d.test.size());
  const IouResult iou = iou_from(cm);
  csv.row({"aggregate", format_real(iou.mean), format_real(bf / n), format_real(hf / n), format_real(tv / n)});
  KeyValues summary{{"samples", std::to_string(d.test.size())},
                    {"miou", format_real(iou.mean)},
                    {"boundary_f1", format_real(bf / n)},
                    {"hf_ratio", format_real(hf / n)},
                    {"label_tv", format_real(tv / n)}};
  for (std::size_t k = 0; k < iou.iou.size(); ++k)
    summary.emplace_back("iou." + c.bench.scene.classes[k], iou.present[k] ? format_real(iou.iou[k]) : "absent");
  write_key_values(c.out / "summary.txt", summary);
  std::printf("miou=%s boundary_f1=%s\n", format_real(iou.mean).c_str(), format_real(bf / n).c_str());
  return 0;
}

int cmd_ablate_depth(const RunConfig& c) {
  CsvWriter csv(c.out / "ablation.csv");
  csv.row(ablation_header());
  for (int s = 0; s < c.seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const BenchmarkData data = benchmark_data(c.bench, seed);
    for (int depth : c.depths) {
      const AblationRow row = ablation_cell(c.bench, data, seed, depth, c.bench.seg.mff);
      csv.row(ablation_fields(row));
      std::printf("depth=%d seed=%d val_miou=%s gen_hf_residual=%s\n", depth, s, format_real(row.val_miou).c_str(),
                  format_real(row.gen_hf_residual).c_str());
      std::fflush(stdout);
    }
  }
  return 0;
}

int cmd_grad_check(const RunConfig& c) {
  CsvWriter csv(c.out / "grad_check.csv");
  csv.row({"model", "param", "max_rel_error", "max_abs_error", "pass"});
  MiniatureSpec spec;
  spec.seed = c.seed;
  spec.iel_depth = std::min(c.iel.depth, 5);
  spec.mff = c.bench.seg.mff;
  spec.iel_on_logits = c.iel_on_logits;
  bool pass = true;
  auto emit = [&](const std::string& model, const GradCheckReport& r) {
    for (const auto& p : r.params) {
      csv.row({model, p.name, format_real(p.max_rel_error), format_real(p.max_abs_error), p.pass ? "1" : "0"});
      std::printf("%-10s %-20s max_rel=%.3e %s\n", model.c_str(), p.name.c_str(), p.max_rel_error,
                  p.pass ? "ok" : "FAIL");
    }
    pass = pass && r.pass;
  };
  emit("segmenter", segmenter_grad_check(spec));
  emit("generator", generator_grad_check(spec));
  if (!pass) {
    std::fprintf(stderr, "gradient check failed\n");
    return 2;
  }
  return 0;
}

// Per-scale feature, spectrum and fusion dumps for the first test image.
int cmd_fuse_demo(const RunConfig& c) {
  SegmenterConfig mc = segmenter_config(c);
  mc.mff = true;
  ToySegmenter m = make_segmenter(mc);
  if (!c.checkpoint.empty()) load_checkpoint(c.checkpoint, m.params);
  const SegSample s = gen_scene(scene_of(c), c.bench.test_style, kTestIndexBase, Domain::target);
  SegTape tape;
  forward_infer(m, s.image, &tape);
  std::vector<std::string> files{"input.ppm"};
  write_ppm(c.out / "input.ppm", s.image);
  auto dump = [&](const std::string& name, const RealGrid& g) {
    write_pgm_normalized(c.out / name, g.plane(0), g.height(), g.width());
    files.push_back(name);
  };
  auto shifted_log = [](const RealGrid& a) {
    RealGrid r(1, a.height(), a.width());
    for (std::size_t y = 0; y < a.height(); ++y)
      for (std::size_t x = 0; x < a.width(); ++x)
        r(0, (y + a.height() / 2) % a.height(), (x + a.width() / 2) % a.width()) = std::log1p(a(0, y, x));
    return r;
  };
  auto shifted = [](const RealGrid& a) {
    RealGrid r(1, a.height(), a.width());
    for (std::size_t y = 0; y < a.height(); ++y)
      for (std::size_t x = 0; x < a.width(); ++x)
        r(0, (y + a.height() / 2) % a.height(), (x + a.width() / 2) % a.width()) = a(0, y, x);
    return r;
  };
  KeyValues info;
  for (std::size_t i = 0; i < mc.scales(); ++i) {
    const std::string p = "scale" + std::to_string(i) + "_";
    const MffCache& mf = tape.mff[i];
    dump(p + "low.pgm", mf.upsampled);
    dump(p + "skip.pgm", tape.skip[i]);
    dump(p + "amp_low.pgm", shifted_log(mf.polar_lr.amplitude));
    dump(p + "amp_skip.pgm", shifted_log(mf.polar_hr.amplitude));
    dump(p + "amp_fused.pgm", shifted_log(mf.amplitude));
    dump(p + "phase_low.pgm", shifted(mf.polar_lr.phase));
    dump(p + "phase_skip.pgm", shifted(mf.polar_hr.phase));
    dump(p + "phase_fused.pgm", shifted(mf.phase));
    dump(p + "fused_mff.pgm", tape.fused[i]);
    dump(p + "fused_plain.pgm", upsample2x(tape.lower[i]) + tape.skip[i]);
    const MffParams mp = mff_params_from(m.params, m.fusion[i]);
    info.emplace_back(p + "alpha", format_real(mp.alpha()));
    info.emplace_back(p + "beta", format_real(mp.beta()));
    info.emplace_back(p + "imag_residue", format_real(mf.imag_residue));
    info.emplace_back(p + "mff_vs_plain_max_abs",
                      format_real(max_abs_diff(tape.fused[i], upsample2x(tape.lower[i]) + tape.skip[i])));
  }
  info.emplace_back("files", join(files));
  write_key_values(c.out / "fuse_demo.txt", info);
  std::printf("wrote %zu images to %s\n", files.size(), c.out.string().c_str());
  return 0;
}

int cmd_prompts(const RunConfig& c, const Overrides& o) {
  auto out = open_out(c.out / "prompts.txt", true);
  if (!o.categories.empty()) {
    const std::string p = build_prompt(o.categories, o.context.value_or(""));
    out << p << '\n';
    std::printf("%s\n", p.c_str());
    return 0;
  }
  const Corpus corpus =
      c.input_dir.empty() ? gen_corpus(scene_of(c), c.bench.source_style, c.n) : read_corpus(c.input_dir);
  for (const auto& s : corpus.samples)
    out << (o.context ? build_prompt(present_classes(s, corpus.spec.classes), *o.context)
                      : prompt_for(s, corpus.spec.classes))
        << '\n';
  std::printf("wrote %zu prompts\n", corpus.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ielkit: inverse evolution layers and frequency fusion on synthetic street scenes"};
  app.set_version_flag("--version", IELKIT_VERSION);
  app.require_subcommand(1);
  Overrides o;

  auto* gen_data = app.add_subcommand("gen-data", "render a deterministic synthetic corpus");
  add_common(gen_data, o);
  gen_data->add_option("--n", o.n, "number of samples (default 500)");
  gen_data->add_option("--domain", o.domain, "source|generated|target (default source)");
  gen_data->add_option("--size", o.size, "scene size in pixels (default 64)");

  auto* inject = app.add_subcommand("inject", "apply the defect injector to a corpus on disk");
  add_common(inject, o);
  inject->add_option("--in", o.input, "input corpus directory")->required();

  auto* train_seg = app.add_subcommand("train-seg", "train the segmenter (alternating source/generated)");
  add_common(train_seg, o);
  add_training(train_seg, o);

  auto* train_gen = app.add_subcommand("train-gen", "train the generator with the IEL-feedback loss");
  add_common(train_gen, o);
  add_training(train_gen, o);

  auto* eval = app.add_subcommand("eval", "evaluate a segmenter checkpoint on the test set");
  add_common(eval, o);
  add_training(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "segmenter checkpoint")->required();

  auto* ablate = app.add_subcommand("ablate-depth", "train at several IEL depths and seeds");
  add_common(ablate, o);
  add_training(ablate, o);
  ablate->add_option("--depths", o.depths, "comma-separated depths (default 0,5,10,20)");
  ablate->add_option("--seeds", o.seeds, "number of seeds (default 3)");

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of every parameter group");
  add_common(grad, o);
  grad->add_option("--mff", o.mff, "include MFF blocks (default true)");
  grad->add_option("--iel-on-logits", o.iel_on_logits, "also apply IELs to the logits");

  auto* fuse = app.add_subcommand("fuse-demo", "dump per-scale features, spectra and fused maps");
  add_common(fuse, o);
  fuse->add_option("--checkpoint", o.checkpoint, "segmenter checkpoint (default: random init)");
  fuse->add_option("--size", o.size, "scene size in pixels (default 64)");

  auto* prompts = app.add_subcommand("prompts", "expand the prompt template");
  add_common(prompts, o);
  prompts->add_option("--in", o.input, "corpus directory (default: render --n scenes)");
  prompts->add_option("--n", o.n, "scenes to render when --in is absent (default 500)");
  prompts->add_option("--categories", o.categories, "explicit category list")->delimiter(',');
  prompts->add_option("--context", o.context, "context clause; empty drops it");

  if (argc < 2) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    const RunConfig c = resolve(o);
    fs::create_directories(c.out);
    write_run_manifest(c, cmd->get_name(), argc, argv);
    const std::string name = cmd->get_name();
    if (name == "gen-data") return cmd_gen_data(c);
    if (name == "inject") return cmd_inject(c);
    if (name == "train-seg") return cmd_train_seg(c);
    if (name == "train-gen") return cmd_train_gen(c);
    if (name == "eval") return cmd_eval(c);
    if (name == "ablate-depth") return cmd_ablate_depth(c);
    if (name == "grad-check") return cmd_grad_check(c);
    if (name == "fuse-demo") return cmd_fuse_demo(c);
    if (name == "prompts") return cmd_prompts(c, o);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
