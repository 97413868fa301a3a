#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ielkit/grid.hpp"
#include "ielkit/synth.hpp"

namespace ielkit {

namespace fs = std::filesystem;

inline std::ofstream open_out(const fs::path& p, bool binary = false) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, binary ? std::ios::binary : std::ios::out);
  if (!f) throw DataError("cannot write " + p.string());
  return f;
}

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Binary PPM (P6) of a 3-channel grid with values in [0, 1].
inline void write_ppm(const fs::path& p, const RealGrid& rgb) {
  if (rgb.channels() != 3) throw ShapeError("write_ppm: need 3 channels");
  auto f = open_out(p, true);
  f << "P6\n" << rgb.width() << " " << rgb.height() << "\n255\n";
  for (std::size_t y = 0; y < rgb.height(); ++y)
    for (std::size_t x = 0; x < rgb.width(); ++x)
      for (std::size_t c = 0; c < 3; ++c) f.put(static_cast<char>(quantize(rgb(c, y, x))));
}

/// Binary PGM (P5) with class ids as grey levels.
inline void write_pgm(const fs::path& p, const LabelGrid& labels) {
  auto f = open_out(p, true);
  f << "P5\n" << labels.width() << " " << labels.height() << "\n255\n";
  for (auto v : labels.data()) {
    if (v < 0 || v > 255) throw DataError("write_pgm: label outside [0, 255]");
    f.put(static_cast<char>(v));
  }
}

/// Binary PGM of one plane, min-max normalized to [0, 255]. Constant planes
/// map to 0.
inline void write_pgm_normalized(const fs::path& p, std::span<const double> plane,
                                 std::size_t height, std::size_t width) {
  double lo = INFINITY, hi = -INFINITY;
  for (double v : plane) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  auto f = open_out(p, true);
  f << "P5\n" << width << " " << height << "\n255\n";
  for (double v : plane) {
    const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    f.put(static_cast<char>(quantize(t)));
  }
}

namespace detail {

struct Pnm {
  std::string magic;
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> bytes;
};

inline Pnm read_pnm(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  Pnm img;
  int maxval = 0;
  auto skip = [&f] {
    while (true) {
      const int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
  };
  f >> img.magic;
  skip();
  f >> img.width;
  skip();
  f >> img.height;
  skip();
  f >> maxval;
  f.get();
  if (!f || maxval != 255 || (img.magic != "P5" && img.magic != "P6"))
    throw DataError("unsupported or malformed image " + p.string());
  const std::size_t n = img.width * img.height * (img.magic == "P6" ? 3 : 1);
  img.bytes.resize(n);
  f.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(f.gcount()) != n) throw DataError("truncated image " + p.string());
  return img;
}

}  // namespace detail

inline RealGrid read_ppm(const fs::path& p) {
  const auto img = detail::read_pnm(p);
  if (img.magic != "P6") throw DataError(p.string() + " is not a binary PPM");
  RealGrid g(3, img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        g(c, y, x) = img.bytes[(y * img.width + x) * 3 + c] / 255.0;
  return g;
}

inline LabelGrid read_pgm_labels(const fs::path& p) {
  const auto img = detail::read_pnm(p);
  if (img.magic != "P5") throw DataError(p.string() + " is not a binary PGM");
  LabelGrid g(1, img.height, img.width);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = img.bytes[i];
  return g;
}

// Shortest round-trip representation of a double.
inline std::string format_real(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  double back = 0.0;
  for (int prec = 6; prec <= 17; ++prec) {
    std::ostringstream t;
    t << std::setprecision(prec) << v;
    std::istringstream(t.str()) >> back;
    if (back == v) return t.str();
  }
  return s.str();
}

/// RFC-4180 CSV writer: fields with comma, quote or newline are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& p) : out_(open_out(p, true)) {}

  static std::string quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string q = "\"";
    for (char c : field) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << quote(fields[i]);
    }
    out_ << "\r\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline void write_key_values(const fs::path& p, const KeyValues& kv) {
  auto f = open_out(p, true);
  for (const auto& [k, v] : kv) f << k << '=' << v << '\n';
}

inline std::map<std::string, std::string> read_key_values(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw DataError("cannot read " + p.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed manifest line in " + p.string());
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline std::string join(const std::vector<std::string>& parts, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

inline void style_fields(KeyValues& kv, const std::string& prefix, const DomainStyle& s) {
  kv.emplace_back(prefix + "gain", format_real(s.gain));
  kv.emplace_back(prefix + "gamma", format_real(s.gamma));
  kv.emplace_back(prefix + "noise_sigma", format_real(s.noise_sigma));
  kv.emplace_back(prefix + "hue_rotation", format_real(s.hue_rotation));
  kv.emplace_back(prefix + "texture_frequency", format_real(s.texture_frequency));
}

inline void defect_fields(KeyValues& kv, const std::string& prefix, const DefectConfig& d) {
  kv.emplace_back(prefix + "hole_rate", format_real(d.hole_rate));
  kv.emplace_back(prefix + "blob_rate", format_real(d.blob_rate));
  kv.emplace_back(prefix + "swap_rate", format_real(d.swap_rate));
  kv.emplace_back(prefix + "jitter_rate", format_real(d.jitter_rate));
  kv.emplace_back(prefix + "seed", std::to_string(d.seed));
}

inline std::string sample_stem(std::size_t index) {
  std::ostringstream s;
  s << std::setw(5) << std::setfill('0') << index;
  return s.str();
}

/// Writes image_NNNNN.ppm / label_NNNNN.pgm per sample, manifest.txt and
/// prompts.txt into dir.
inline void write_corpus(const fs::path& dir, const Corpus& c) {
  fs::create_directories(dir);
  KeyValues kv{{"format", "ielkit-corpus-1"},
               {"seed", std::to_string(c.spec.seed)},
               {"n", std::to_string(c.size())},
               {"first_index", std::to_string(c.first_index)},
               {"size", std::to_string(c.spec.size)},
               {"classes", join(c.spec.classes)},
               {"domain", to_string(c.domain)}};
  style_fields(kv, "style.", c.style);
  if (c.defects) defect_fields(kv, "defects.", *c.defects);
  std::ofstream prompts = open_out(dir / "prompts.txt", true);
  for (const auto& s : c.samples) {
    const std::string stem = sample_stem(s.index);
    write_ppm(dir / ("image_" + stem + ".ppm"), s.image);
    write_pgm(dir / ("label_" + stem + ".pgm"), s.label);
    kv.emplace_back("sample." + std::to_string(s.index),
                    "image_" + stem + ".ppm label_" + stem + ".pgm " + hex64(checksum(s)));
    prompts << prompt_for(s, c.spec.classes) << '\n';
  }
  write_key_values(dir / "manifest.txt", kv);
}

inline double parse_real(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + what + ": '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for " + what + ": '" + s + "'");
  }
}

/// Loads a corpus written by write_corpus. Images come back quantized to 8 bits.
inline Corpus read_corpus(const fs::path& dir) {
  const auto kv = read_key_values(dir / "manifest.txt");
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError("manifest missing '" + k + "' in " + dir.string());
    return it->second;
  };
  if (get("format") != "ielkit-corpus-1") throw DataError("unknown corpus format in " + dir.string());
  Corpus c;
  c.spec.seed = static_cast<std::uint64_t>(parse_int(get("seed"), "seed"));
  c.spec.size = static_cast<std::size_t>(parse_int(get("size"), "size"));
  c.spec.classes = split(get("classes"));
  c.domain = domain_from_string(get("domain"));
  c.first_index = static_cast<std::size_t>(parse_int(get("first_index"), "first_index"));
  c.style.gain = parse_real(get("style.gain"), "style.gain");
  c.style.gamma = parse_real(get("style.gamma"), "style.gamma");
  c.style.noise_sigma = parse_real(get("style.noise_sigma"), "style.noise_sigma");
  c.style.hue_rotation = parse_real(get("style.hue_rotation"), "style.hue_rotation");
  c.style.texture_frequency = parse_real(get("style.texture_frequency"), "style.texture_frequency");
  if (kv.count("defects.hole_rate")) {
    DefectConfig d;
    d.hole_rate = parse_real(get("defects.hole_rate"), "defects.hole_rate");
    d.blob_rate = parse_real(get("defects.blob_rate"), "defects.blob_rate");
    d.swap_rate = parse_real(get("defects.swap_rate"), "defects.swap_rate");
    d.jitter_rate = parse_real(get("defects.jitter_rate"), "defects.jitter_rate");
    d.seed = static_cast<std::uint64_t>(parse_int(get("defects.seed"), "defects.seed"));
    c.defects = d;
  }
  const auto n = static_cast<std::size_t>(parse_int(get("n"), "n"));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t index = c.first_index + i;
    const auto files = split(get("sample." + std::to_string(index)), ' ');
    if (files.size() < 2) throw DataError("malformed sample entry " + std::to_string(index));
    SegSample s;
    s.index = index;
    s.seed = c.spec.seed;
    s.style = c.style;
    s.domain = c.domain;
    s.image = read_ppm(dir / files[0]);
    s.label = read_pgm_labels(dir / files[1]);
    for (auto v : s.label.data())
      if (v < 0 || static_cast<std::size_t>(v) >= c.spec.classes.size())
        throw DataError("label id out of range in " + files[1]);
    c.samples.push_back(std::move(s));
  }
  return c;
}

}  // namespace ielkit
