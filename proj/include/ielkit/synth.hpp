#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ielkit/grid.hpp"
#include "ielkit/rng.hpp"

namespace ielkit {

inline std::vector<std::string> default_classes() {
  return {"background", "road", "building", "car", "pole", "vegetation"};
}

struct SceneSpec {
  std::uint64_t seed = 0;
  std::vector<std::string> classes = default_classes();
  std::size_t size = 64;

  std::size_t class_count() const { return classes.size(); }
  void validate() const {
    if (classes.size() < 2 || classes.size() > 19)
      throw ConfigError("scene class count must be in [2, 19]");
    if (size < 8 || size % 2 != 0) throw ConfigError("scene size must be even and >= 8");
  }
};

// Rendering knobs that define a visual domain.
struct DomainStyle {
  double gain = 1.0;
  double gamma = 1.0;
  double noise_sigma = 0.02;
  double hue_rotation = 0.0;  // radians about the grey axis
  double texture_frequency = 1.0;

  void validate() const {
    if (gain < 0.5 || gain > 1.5) throw ConfigError("style gain must be in [0.5, 1.5]");
    if (gamma < 0.7 || gamma > 1.4) throw ConfigError("style gamma must be in [0.7, 1.4]");
    if (noise_sigma < 0.0 || noise_sigma > 0.1)
      throw ConfigError("style noise sigma must be in [0, 0.1]");
    if (!(texture_frequency > 0.0)) throw ConfigError("style texture frequency must be positive");
  }

  static DomainStyle source() { return {}; }
  // Stylized counterpart standing in for generator output.
  static DomainStyle generated() { return {1.15, 0.9, 0.03, 0.35, 1.5}; }
  // Unseen target domain used for evaluation.
  static DomainStyle shifted() { return {0.8, 1.25, 0.05, -0.5, 0.7}; }
  // Noise-free neutral rendering, convenient for pixel-exact tests.
  static DomainStyle neutral() { return {1.0, 1.0, 0.0, 0.0, 1.0}; }
};

struct DefectConfig {
  double hole_rate = 0.0;
  double blob_rate = 0.0;
  double swap_rate = 0.0;
  double jitter_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    for (double r : {hole_rate, blob_rate, swap_rate, jitter_rate})
      if (r < 0.0 || r > 1.0) throw ConfigError("defect rates must be in [0, 1]");
  }
  bool any() const { return hole_rate > 0 || blob_rate > 0 || swap_rate > 0 || jitter_rate > 0; }

  // Defect mix used for the generated corpus in the default benchmark.
  static DefectConfig benchmark(std::uint64_t seed) { return {0.5, 0.5, 0.3, 0.5, seed}; }
};

enum class Domain { source, generated, target };

inline const char* to_string(Domain d) {
  switch (d) {
    case Domain::source: return "source";
    case Domain::generated: return "generated";
    case Domain::target: return "target";
  }
  return "?";
}

inline Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "generated") return Domain::generated;
  if (s == "target") return Domain::target;
  throw ConfigError("unknown domain '" + s + "'");
}

enum class ShapeKind { rect, ellipse };

struct Instance {
  std::int32_t class_id = 0;
  ShapeKind shape = ShapeKind::rect;
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open box
};

struct SegSample {
  RealGrid image;  // 3 x H x W in [0, 1]
  LabelGrid label;
  Domain domain = Domain::source;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  DomainStyle style;
  std::vector<Instance> instances;
};

namespace detail {

enum class Role { sky, road, building, car, pole, vegetation, blob };

inline Role role_of(const std::vector<std::string>& classes, std::size_t c) {
  const std::string& n = classes[c];
  if (c == 0) return Role::sky;
  if (n == "road") return Role::road;
  if (n == "building") return Role::building;
  if (n == "car") return Role::car;
  if (n == "pole") return Role::pole;
  if (n == "vegetation") return Role::vegetation;
  if (c == 1) return Role::road;
  return Role::blob;
}

inline constexpr std::array<std::array<double, 3>, 19> kPalette{{
    {0.55, 0.70, 0.90}, {0.35, 0.33, 0.38}, {0.62, 0.45, 0.33}, {0.15, 0.20, 0.60},
    {0.88, 0.80, 0.22}, {0.22, 0.55, 0.18}, {0.72, 0.55, 0.62}, {0.82, 0.38, 0.72},
    {0.55, 0.68, 0.33}, {0.88, 0.18, 0.22}, {0.10, 0.50, 0.52}, {0.45, 0.20, 0.45},
    {0.95, 0.60, 0.20}, {0.30, 0.30, 0.10}, {0.60, 0.85, 0.60}, {0.20, 0.10, 0.25},
    {0.75, 0.75, 0.75}, {0.50, 0.10, 0.05}, {0.05, 0.35, 0.20},
}};

inline constexpr double kTextureAmplitude = 0.07;

// Class texture before styling: palette colour plus a role-specific pattern.
inline std::array<double, 3> texture(std::size_t c, Role role, double y, double x,
                                     double freq) {
  const double tau = 2.0 * std::numbers::pi;
  double pat = 0.0;
  switch (role) {
    case Role::sky: pat = std::sin(tau * freq * y / 40.0); break;
    case Role::road: pat = std::sin(tau * freq * x / 6.0) * 0.5 + std::sin(tau * freq * y / 9.0) * 0.5; break;
    case Role::building:
      pat = (std::sin(tau * freq * x / 5.0) > 0.3 && std::sin(tau * freq * y / 5.0) > 0.3) ? 1.0 : -0.4;
      break;
    case Role::car: pat = std::sin(tau * freq * (x + y) / 7.0); break;
    case Role::pole: pat = std::sin(tau * freq * y / 4.0); break;
    case Role::vegetation: pat = std::sin(tau * freq * x / 3.0) * std::sin(tau * freq * y / 3.5); break;
    case Role::blob: {
      const double a = 1.0 + static_cast<double>(c % 3), b = 1.0 + static_cast<double>(c % 4);
      pat = std::sin(tau * freq * (a * y + b * x) / 11.0);
      break;
    }
  }
  const auto& base = kPalette[c % kPalette.size()];
  return {base[0] + kTextureAmplitude * pat, base[1] + kTextureAmplitude * pat,
          base[2] + kTextureAmplitude * pat * 0.5};
}

inline std::array<double, 3> apply_style(std::array<double, 3> rgb, const DomainStyle& st,
                                         std::uint64_t noise_key) {
  if (st.hue_rotation != 0.0) {
    // Rodrigues rotation about (1,1,1)/sqrt(3).
    const double c = std::cos(st.hue_rotation), s = std::sin(st.hue_rotation);
    const double k = (1.0 - c) / 3.0, r = s / std::sqrt(3.0);
    const auto [R, G, B] = rgb;
    rgb = {R * (c + k) + G * (k - r) + B * (k + r), R * (k + r) + G * (c + k) + B * (k - r),
           R * (k - r) + G * (k + r) + B * (c + k)};
  }
  for (int ch = 0; ch < 3; ++ch) {
    double v = std::clamp(rgb[ch] * st.gain, 0.0, 1.0);
    v = std::pow(v, st.gamma);
    if (st.noise_sigma > 0.0)
      v += st.noise_sigma * hashed_normal(hash_combine(noise_key, static_cast<std::uint64_t>(ch)));
    rgb[ch] = std::clamp(v, 0.0, 1.0);
  }
  return rgb;
}

inline std::uint64_t pixel_key(std::uint64_t seed, std::size_t index, std::size_t y, std::size_t x) {
  return hash_combine(hash_combine(hash_combine(seed, index), y), x);
}

inline bool inside(const Instance& in, int y, int x) {
  if (y < in.y0 || y >= in.y1 || x < in.x0 || x >= in.x1) return false;
  if (in.shape == ShapeKind::rect) return true;
  const double cy = 0.5 * (in.y0 + in.y1 - 1), cx = 0.5 * (in.x0 + in.x1 - 1);
  const double ry = 0.5 * (in.y1 - in.y0), rx = 0.5 * (in.x1 - in.x0);
  const double dy = (y - cy) / ry, dx = (x - cx) / rx;
  return dy * dy + dx * dx <= 1.0;
}

}  // namespace detail

/// Renders the textured, styled colour of class `c` at pixel (y, x) of `sample`.
inline void paint_pixel(SegSample& sample, const std::vector<std::string>& classes, std::size_t c,
                        std::size_t y, std::size_t x) {
  const auto role = detail::role_of(classes, c);
  const auto rgb = detail::apply_style(
      detail::texture(c, role, double(y), double(x), sample.style.texture_frequency), sample.style,
      detail::pixel_key(sample.seed, sample.index, y, x));
  for (std::size_t ch = 0; ch < 3; ++ch) sample.image(ch, y, x) = rgb[ch];
}

/// Layered street scene: sky, road band, then buildings, vegetation, other
/// blobs, cars and poles. Pure function of (spec, style, index).
inline SegSample gen_scene(const SceneSpec& spec, const DomainStyle& style, std::size_t index,
                           Domain domain = Domain::source) {
  spec.validate();
  style.validate();
  const int n = static_cast<int>(spec.size);
  const double N = static_cast<double>(n);
  Rng rng(hash_combine(spec.seed, index));
  SegSample s;
  s.domain = domain;
  s.index = index;
  s.seed = spec.seed;
  s.style = style;
  s.label = LabelGrid(1, spec.size, spec.size, 0);
  s.image = RealGrid(3, spec.size, spec.size);

  const int horizon = static_cast<int>(N * rng.uniform(0.5, 0.65));
  for (int y = horizon; y < n; ++y)
    for (int x = 0; x < n; ++x) s.label(0, y, x) = 1;

  using detail::Role;
  auto place = [&](std::size_t c, Role role) {
    Instance in;
    in.class_id = static_cast<std::int32_t>(c);
    switch (role) {
      case Role::building: {
        const int w = static_cast<int>(N * rng.uniform(0.15, 0.35));
        const int h = static_cast<int>(N * rng.uniform(0.2, 0.4));
        in.x0 = static_cast<int>(rng.integer(0, n - w));
        in.x1 = in.x0 + w;
        in.y1 = horizon;
        in.y0 = std::max(0, horizon - h);
        break;
      }
      case Role::vegetation: {
        const int r = static_cast<int>(N * rng.uniform(0.08, 0.15));
        const int cx = static_cast<int>(rng.integer(0, n - 1));
        const int cy = horizon - static_cast<int>(rng.integer(0, r));
        in = {in.class_id, ShapeKind::ellipse, cy - r, cx - r, cy + r + 1, cx + r + 1};
        break;
      }
      case Role::car: {
        const int w = static_cast<int>(N * rng.uniform(0.15, 0.25));
        const int h = static_cast<int>(N * rng.uniform(0.08, 0.14));
        in.x0 = static_cast<int>(rng.integer(0, n - w));
        in.x1 = in.x0 + w;
        in.y0 = static_cast<int>(rng.integer(horizon, std::max(horizon, n - h)));
        in.y1 = std::min(n, in.y0 + h);
        break;
      }
      case Role::pole: {
        const int w = std::max(2, n / 32);
        in.x0 = static_cast<int>(rng.integer(0, n - w));
        in.x1 = in.x0 + w;
        in.y0 = std::max(0, horizon - static_cast<int>(N * rng.uniform(0.25, 0.4)));
        in.y1 = std::min(n, horizon + static_cast<int>(N * 0.1));
        break;
      }
      default: {
        const int r = static_cast<int>(N * rng.uniform(0.06, 0.12));
        const int cx = static_cast<int>(rng.integer(r, n - 1 - r));
        const int cy = static_cast<int>(rng.integer(r, n - 1 - r));
        in = {in.class_id, ShapeKind::ellipse, cy - r, cx - r, cy + r + 1, cx + r + 1};
        break;
      }
    }
    in.y0 = std::clamp(in.y0, 0, n);
    in.y1 = std::clamp(in.y1, 0, n);
    in.x0 = std::clamp(in.x0, 0, n);
    in.x1 = std::clamp(in.x1, 0, n);
    return in;
  };

  // Draw order by role; later layers occlude earlier ones.
  const Role order[] = {Role::building, Role::vegetation, Role::blob, Role::car, Role::pole};
  for (Role layer : order)
    for (std::size_t c = 2; c < spec.class_count(); ++c) {
      if (detail::role_of(spec.classes, c) != layer) continue;
      if (!rng.bernoulli(0.85)) continue;
      const auto count = rng.integer(1, 2);
      for (std::int64_t k = 0; k < count; ++k) {
        const Instance in = place(c, layer);
        if (in.y1 <= in.y0 || in.x1 <= in.x0) continue;
        s.instances.push_back(in);
        for (int y = in.y0; y < in.y1; ++y)
          for (int x = in.x0; x < in.x1; ++x)
            if (detail::inside(in, y, x)) s.label(0, y, x) = in.class_id;
      }
    }

  for (std::size_t y = 0; y < spec.size; ++y)
    for (std::size_t x = 0; x < spec.size; ++x)
      paint_pixel(s, spec.classes, static_cast<std::size_t>(s.label(0, y, x)), y, x);
  return s;
}

/// Corrupts the image (never the label) with per-instance Bernoulli defects:
/// holes, spurious blobs, class swaps and boundary jitter.
inline SegSample inject_defects(SegSample s, const std::vector<std::string>& classes,
                                const DefectConfig& cfg) {
  cfg.validate();
  if (!cfg.any()) return s;
  const int h = static_cast<int>(s.label.height()), w = static_cast<int>(s.label.width());
  const std::size_t ncls = classes.size();
  Rng rng(hash_combine(hash_combine(cfg.seed, s.index), 0x5eedULL));
  const auto instances = s.instances;
  auto paint = [&](int y, int x, std::size_t c) {
    paint_pixel(s, classes, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  auto owns = [&](const Instance& in, int y, int x) {
    return detail::inside(in, y, x) && s.label(0, y, x) == in.class_id;
  };

  for (const Instance& in : instances) {
    // Draw all four coins up front so each defect type has a stable stream.
    const bool hole = rng.bernoulli(cfg.hole_rate);
    const bool blob = rng.bernoulli(cfg.blob_rate);
    const bool swap = rng.bernoulli(cfg.swap_rate);
    const bool jitter = rng.bernoulli(cfg.jitter_rate);
    const double hole_frac = rng.uniform(0.4, 0.7);
    const double hole_pos = rng.uniform();
    const auto swap_to = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(ncls) - 1));
    const auto blob_class = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(ncls) - 1));
    const int blob_r = static_cast<int>(rng.integer(2, std::max(2, h / 12)));
    const int blob_y = static_cast<int>(rng.integer(0, h - 1));
    const int blob_x = static_cast<int>(rng.integer(0, w - 1));
    const std::uint64_t jitter_seed = hash_combine(cfg.seed, rng.integer(0, 1 << 30));

    if (swap) {
      const std::size_t to = swap_to == static_cast<std::size_t>(in.class_id)
                                 ? (swap_to % (ncls - 1)) + 1
                                 : swap_to;
      for (int y = in.y0; y < in.y1; ++y)
        for (int x = in.x0; x < in.x1; ++x)
          if (owns(in, y, x)) paint(y, x, to);
    }
    if (hole) {
      // Horizontal slab covering hole_frac of the box height.
      const int bh = in.y1 - in.y0;
      const int hh = std::max(1, static_cast<int>(bh * hole_frac));
      const int hy0 = in.y0 + static_cast<int>((bh - hh) * hole_pos);
      for (int y = hy0; y < hy0 + hh; ++y)
        for (int x = in.x0; x < in.x1; ++x)
          if (owns(in, y, x)) paint(y, x, 0);
    }
    if (jitter) {
      for (int y = std::max(0, in.y0 - 1); y < std::min(h, in.y1 + 1); ++y)
        for (int x = std::max(0, in.x0 - 1); x < std::min(w, in.x1 + 1); ++x) {
          const bool mine = owns(in, y, x);
          int ny = y, nx = x;
          bool edge = false;
          for (auto [dy, dx] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
            if (owns(in, yy, xx) != mine) {
              edge = true;
              ny = yy;
              nx = xx;
              break;
            }
          }
          if (!edge || to_unit(mix64(hash_combine(jitter_seed, std::uint64_t(y * w + x)))) < 0.5)
            continue;
          paint(y, x, static_cast<std::size_t>(s.label(0, ny, nx)));
        }
    }
    if (blob) {
      for (int y = blob_y - blob_r; y <= blob_y + blob_r; ++y)
        for (int x = blob_x - blob_r; x <= blob_x + blob_r; ++x) {
          if (y < 0 || x < 0 || y >= h || x >= w) continue;
          const int dy = y - blob_y, dx = x - blob_x;
          if (dy * dy + dx * dx <= blob_r * blob_r) paint(y, x, blob_class);
        }
    }
  }
  return s;
}

/// "A photo of a city street scene with {C} in {X}"; the " in X" clause is
/// dropped when the context is empty.
inline std::string build_prompt(const std::vector<std::string>& categories,
                                const std::string& context) {
  if (categories.empty()) throw UsageError("build_prompt: categories must be non-empty");
  std::string out = "A photo of a city street scene with ";
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (i) out += ", ";
    out += categories[i];
  }
  if (!context.empty()) out += " in " + context;
  return out;
}

inline const std::vector<std::string>& prompt_contexts() {
  static const std::vector<std::string> contexts{
      "clear daylight", "foggy night", "heavy rain at dusk", "snowy morning",
      "overcast afternoon", "bright sunset", "light drizzle at night", "hazy noon"};
  return contexts;
}

/// Names of the classes present in a label map, in class order.
inline std::vector<std::string> present_classes(const SegSample& s, const std::vector<std::string>& classes) {
  std::vector<bool> seen(classes.size(), false);
  for (auto v : s.label.data()) seen[static_cast<std::size_t>(v)] = true;
  std::vector<std::string> cats;
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (seen[c]) cats.push_back(classes[c]);
  return cats;
}

/// Prompt for a sample, with a context picked deterministically from the index.
inline std::string prompt_for(const SegSample& s, const std::vector<std::string>& classes) {
  const auto& ctx = prompt_contexts();
  return build_prompt(present_classes(s, classes), ctx[s.index % ctx.size()]);
}

/// FNV-1a over image bytes and labels.
inline std::uint64_t checksum(const SegSample& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  feed(s.image.data().data(), s.image.size() * sizeof(double));
  feed(s.label.data().data(), s.label.size() * sizeof(std::int32_t));
  return h;
}

struct Corpus {
  SceneSpec spec;
  DomainStyle style;
  Domain domain = Domain::source;
  std::size_t first_index = 0;
  std::optional<DefectConfig> defects;
  std::vector<SegSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Worker count for corpus generation: IELKIT_THREADS if set, else hardware.
inline std::size_t generation_threads() {
  if (const char* env = std::getenv("IELKIT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// n deterministic samples with indices first_index .. first_index + n - 1.
/// Samples are generated in parallel; each depends only on its index.
inline Corpus gen_corpus(const SceneSpec& spec, const DomainStyle& style, std::size_t n,
                         std::size_t first_index = 0, Domain domain = Domain::source,
                         const std::optional<DefectConfig>& defects = std::nullopt) {
  if (n == 0) throw UsageError("gen_corpus: n must be >= 1");
  spec.validate();
  style.validate();
  if (defects) defects->validate();
  Corpus corpus{spec, style, domain, first_index, defects, std::vector<SegSample>(n)};
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      SegSample s = gen_scene(spec, style, first_index + i, domain);
      if (defects) s = inject_defects(std::move(s), spec.classes, *defects);
      corpus.samples[i] = std::move(s);
    }
  };
  const std::size_t threads = std::min(generation_threads(), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return corpus;
}

}  // namespace ielkit
