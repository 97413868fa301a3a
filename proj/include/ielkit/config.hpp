#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ielkit/benchmark.hpp"
#include "ielkit/io.hpp"

namespace ielkit {

// Everything a CLI run can be configured with. Defaults are the benchmark's.
struct RunConfig {
  BenchmarkConfig bench;
  IelConfig iel;
  bool iel_on_logits = false;
  std::uint64_t seed = 0;
  std::size_t n = 500;  // gen-data corpus size
  Domain domain = Domain::source;
  std::vector<int> depths{0, 5, 10, 20};
  int seeds = 3;
  fs::path out = "ielkit-out";
  fs::path source_dir, generated_dir, test_dir, input_dir, checkpoint;

  // Pushes the shared IEL settings into both schedules.
  void sync() {
    bench.seg.iel = iel;
    bench.gen.iel = iel;
    bench.scene.seed = seed;
  }

  void validate() const {
    bench.validate();
    iel.validate();
    if (n == 0) throw UsageError("n must be >= 1");
    if (bench.scene.size % (std::size_t{1} << bench.channels.size()) != 0)
      throw ConfigError("scene.size must be divisible by 2^(number of train.channels)");
    if (seeds < 1) throw ConfigError("seeds must be >= 1");
    if (depths.empty()) throw ConfigError("depths must list at least one depth");
    for (int d : depths) IelConfig{d, iel.tau, iel.boundary}.validate();
  }

  /// Checks that every referenced input path exists.
  void check_paths() const {
    for (const auto& p : {source_dir, generated_dir, test_dir, input_dir, checkpoint})
      if (!p.empty() && !fs::exists(p)) throw DataError("path does not exist: " + p.string());
  }
};

inline std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const auto& part : split(s, ',')) out.push_back(static_cast<int>(parse_int(part, what)));
  if (out.empty()) throw ConfigError(what + " must not be empty");
  return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  for (int v : parse_int_list(s, what)) {
    if (v <= 0) throw ConfigError(what + " entries must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ConfigError("invalid boolean for " + what + ": '" + s + "'");
}

namespace detail {

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct ConfigKey {
  Setter set;
  Getter get;
};

inline std::size_t parse_count(const std::string& v, const std::string& k) {
  const long long x = parse_int(v, k);
  if (x < 0) throw ConfigError(k + " must be non-negative");
  return static_cast<std::size_t>(x);
}

inline void style_keys(std::map<std::string, ConfigKey>& keys, const std::string& prefix,
                       DomainStyle BenchmarkConfig::* member) {
  auto real = [&](const std::string& name, double DomainStyle::* field) {
    keys[prefix + name] = {
        [=](RunConfig& c, const std::string& v) { (c.bench.*member).*field = parse_real(v, prefix + name); },
        [=](const RunConfig& c) { return format_real((c.bench.*member).*field); }};
  };
  real("gain", &DomainStyle::gain);
  real("gamma", &DomainStyle::gamma);
  real("noise_sigma", &DomainStyle::noise_sigma);
  real("hue_rotation", &DomainStyle::hue_rotation);
  real("texture_frequency", &DomainStyle::texture_frequency);
}

inline void schedule_keys(std::map<std::string, ConfigKey>& keys, const std::string& prefix,
                          TrainSchedule BenchmarkConfig::* member) {
  keys[prefix + "epochs"] = {[=](RunConfig& c, const std::string& v) {
                               (c.bench.*member).epochs = static_cast<int>(parse_int(v, prefix + "epochs"));
                             },
                             [=](const RunConfig& c) { return std::to_string((c.bench.*member).epochs); }};
  keys[prefix + "batch_size"] = {
      [=](RunConfig& c, const std::string& v) { (c.bench.*member).batch_size = parse_count(v, prefix + "batch_size"); },
      [=](const RunConfig& c) { return std::to_string((c.bench.*member).batch_size); }};
  keys[prefix + "learning_rate"] = {[=](RunConfig& c, const std::string& v) {
                                      (c.bench.*member).learning_rate = parse_real(v, prefix + "learning_rate");
                                    },
                                    [=](const RunConfig& c) { return format_real((c.bench.*member).learning_rate); }};
}

inline const std::map<std::string, ConfigKey>& config_keys() {
  static const std::map<std::string, ConfigKey> keys = [] {
    std::map<std::string, ConfigKey> k;
    k["run.seed"] = {
        [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(parse_count(v, "run.seed")); },
        [](const RunConfig& c) { return std::to_string(c.seed); }};
    k["run.out"] = {[](RunConfig& c, const std::string& v) { c.out = v; },
                    [](const RunConfig& c) { return c.out.string(); }};
    k["run.depths"] = {[](RunConfig& c, const std::string& v) { c.depths = parse_int_list(v, "run.depths"); },
                       [](const RunConfig& c) {
                         std::vector<std::string> s;
                         for (int d : c.depths) s.push_back(std::to_string(d));
                         return join(s);
                       }};
    k["run.seeds"] = {[](RunConfig& c, const std::string& v) { c.seeds = static_cast<int>(parse_int(v, "run.seeds")); },
                      [](const RunConfig& c) { return std::to_string(c.seeds); }};
    k["run.checkpoint"] = {[](RunConfig& c, const std::string& v) { c.checkpoint = v; },
                           [](const RunConfig& c) { return c.checkpoint.string(); }};

    k["scene.size"] = {[](RunConfig& c, const std::string& v) { c.bench.scene.size = parse_count(v, "scene.size"); },
                       [](const RunConfig& c) { return std::to_string(c.bench.scene.size); }};
    k["scene.classes"] = {[](RunConfig& c, const std::string& v) { c.bench.scene.classes = split(v); },
                          [](const RunConfig& c) { return join(c.bench.scene.classes); }};

    k["data.n"] = {[](RunConfig& c, const std::string& v) { c.n = parse_count(v, "data.n"); },
                   [](const RunConfig& c) { return std::to_string(c.n); }};
    k["data.domain"] = {[](RunConfig& c, const std::string& v) { c.domain = domain_from_string(v); },
                        [](const RunConfig& c) { return std::string(to_string(c.domain)); }};
    k["data.source_n"] = {
        [](RunConfig& c, const std::string& v) { c.bench.source_n = parse_count(v, "data.source_n"); },
        [](const RunConfig& c) { return std::to_string(c.bench.source_n); }};
    k["data.generated_n"] = {
        [](RunConfig& c, const std::string& v) { c.bench.generated_n = parse_count(v, "data.generated_n"); },
        [](const RunConfig& c) { return std::to_string(c.bench.generated_n); }};
    k["data.test_n"] = {[](RunConfig& c, const std::string& v) { c.bench.test_n = parse_count(v, "data.test_n"); },
                        [](const RunConfig& c) { return std::to_string(c.bench.test_n); }};
    for (auto [name, member] : {std::pair{"source", &RunConfig::source_dir},
                                {"generated", &RunConfig::generated_dir},
                                {"test", &RunConfig::test_dir},
                                {"input", &RunConfig::input_dir}}) {
      k[std::string("data.") + name] = {[member](RunConfig& c, const std::string& v) { c.*member = v; },
                                        [member](const RunConfig& c) { return (c.*member).string(); }};
    }

    style_keys(k, "style.source.", &BenchmarkConfig::source_style);
    style_keys(k, "style.generated.", &BenchmarkConfig::generated_style);
    style_keys(k, "style.target.", &BenchmarkConfig::test_style);

    auto rate = [&k](const std::string& name, double DefectConfig::* field) {
      k["defects." + name] = {
          [=](RunConfig& c, const std::string& v) { c.bench.defects.*field = parse_real(v, "defects." + name); },
          [=](const RunConfig& c) { return format_real(c.bench.defects.*field); }};
    };
    rate("hole_rate", &DefectConfig::hole_rate);
    rate("blob_rate", &DefectConfig::blob_rate);
    rate("swap_rate", &DefectConfig::swap_rate);
    rate("jitter_rate", &DefectConfig::jitter_rate);
    k["defects.seed"] = {
        [](RunConfig& c, const std::string& v) { c.bench.defects.seed = parse_count(v, "defects.seed"); },
        [](const RunConfig& c) { return std::to_string(c.bench.defects.seed); }};

    k["iel.depth"] = {
        [](RunConfig& c, const std::string& v) { c.iel.depth = static_cast<int>(parse_int(v, "iel.depth")); },
        [](const RunConfig& c) { return std::to_string(c.iel.depth); }};
    k["iel.tau"] = {[](RunConfig& c, const std::string& v) { c.iel.tau = parse_real(v, "iel.tau"); },
                    [](const RunConfig& c) { return format_real(c.iel.tau); }};
    k["iel.boundary"] = {[](RunConfig& c, const std::string& v) { c.iel.boundary = padding_from_string(v); },
                         [](const RunConfig& c) { return std::string(to_string(c.iel.boundary)); }};
    k["iel.on_logits"] = {[](RunConfig& c, const std::string& v) { c.iel_on_logits = parse_bool(v, "iel.on_logits"); },
                          [](const RunConfig& c) { return std::string(c.iel_on_logits ? "true" : "false"); }};

    schedule_keys(k, "train.", &BenchmarkConfig::seg);
    k["train.mff"] = {[](RunConfig& c, const std::string& v) { c.bench.seg.mff = parse_bool(v, "train.mff"); },
                      [](const RunConfig& c) { return std::string(c.bench.seg.mff ? "true" : "false"); }};
    k["train.mixing"] = {[](RunConfig& c, const std::string& v) { c.bench.seg.mixing = mixing_from_string(v); },
                         [](const RunConfig& c) { return std::string(to_string(c.bench.seg.mixing)); }};
    k["train.channels"] = {
        [](RunConfig& c, const std::string& v) { c.bench.channels = parse_size_list(v, "train.channels"); },
        [](const RunConfig& c) {
          std::vector<std::string> s;
          for (auto ch : c.bench.channels) s.push_back(std::to_string(ch));
          return join(s);
        }};
    schedule_keys(k, "gen.", &BenchmarkConfig::gen);
    k["gen.width"] = {[](RunConfig& c, const std::string& v) { c.bench.generator_width = parse_count(v, "gen.width"); },
                      [](const RunConfig& c) { return std::to_string(c.bench.generator_width); }};
    return k;
  }();
  return keys;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Applies one "section.key" = value pair.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& keys = detail::config_keys();
  auto it = keys.find(key);
  if (it == keys.end()) throw ConfigError("unknown key '" + key + "'");
  it->second.set(cfg, value);
}

/// Parses key=value lines with optional [section] headers into cfg. '#' and
/// ';' start comments. Errors carry the offending line number.
inline void parse_config_text(std::istream& in, RunConfig& cfg, const std::string& source = "config") {
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw ConfigError(where + "malformed section header '" + t + "'");
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value, got '" + t + "'");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty() || value.find('=') != std::string::npos) throw ConfigError(where + "malformed line '" + t + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set_config_value(cfg, full, value);
    } catch (const Error& e) {
      throw ConfigError(where + e.what());
    }
  }
}

inline RunConfig parse_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  RunConfig cfg;
  parse_config_text(f, cfg, path.string());
  return cfg;
}

/// Every effective setting as sorted key=value pairs.
inline KeyValues config_echo(const RunConfig& cfg) {
  KeyValues kv;
  for (const auto& [k, entry] : detail::config_keys()) kv.emplace_back(k, entry.get(cfg));
  return kv;
}

}  // namespace ielkit
