#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ielkit/io.hpp"
#include "ielkit/params.hpp"
#include "ielkit/segmenter.hpp"

namespace ielkit {

// Text header (one "name d0 d1 ..." line per tensor, then "end"), followed by
// every value as a little-endian IEEE double in header order.
inline void save_checkpoint(const fs::path& p, const ParamStore& params) {
  auto f = open_out(p, true);
  f << "ielkit-checkpoint 1\n" << params.size() << "\n";
  for (const auto& e : params) {
    f << e.name;
    for (auto d : e.shape) f << ' ' << d;
    f << '\n';
  }
  f << "end\n";
  for (const auto& e : params)
    for (double v : e.value) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) f.put(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  if (!f) throw DataError("failed writing checkpoint " + p.string());
}

/// Loads values into an existing store; names and shapes must match exactly.
inline void load_checkpoint(const fs::path& p, ParamStore& params) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint " + p.string());
  std::string line;
  if (!std::getline(f, line) || line != "ielkit-checkpoint 1")
    throw DataError(p.string() + " is not an ielkit checkpoint");
  std::getline(f, line);
  if (line != std::to_string(params.size()))
    throw DataError("checkpoint has " + line + " tensors, model has " + std::to_string(params.size()));
  for (const auto& e : params) {
    std::getline(f, line);
    std::ostringstream want;
    want << e.name;
    for (auto d : e.shape) want << ' ' << d;
    if (line != want.str()) throw DataError("checkpoint tensor '" + line + "' does not match '" + want.str() + "'");
  }
  if (!std::getline(f, line) || line != "end") throw DataError("malformed checkpoint header");
  for (auto& e : params)
    for (double& v : e.value) {
      unsigned char b[8];
      if (!f.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated checkpoint " + p.string());
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= std::uint64_t{b[k]} << (8 * k);
      v = std::bit_cast<double>(bits);
    }
  if (f.peek() != EOF) throw DataError("trailing bytes in checkpoint " + p.string());
}

inline void write_history_csv(const fs::path& p, const std::vector<HistoryRow>& rows) {
  CsvWriter w(p);
  w.row({"epoch", "step", "loss", "val_miou"});
  for (const auto& r : rows)
    w.row({std::to_string(r.epoch), std::to_string(r.step), format_real(r.loss),
           r.val_miou ? format_real(*r.val_miou) : ""});
}

}  // namespace ielkit
