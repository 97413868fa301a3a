#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ielkit/error.hpp"

namespace ielkit {

struct ParamEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  std::size_t count() const { return value.size(); }
};

// Named trainable tensors with gradients of identical shape. Entries keep
// insertion order, which fixes checkpoint layout and iteration order.
class ParamStore {
 public:
  std::size_t add(const std::string& name, std::vector<std::size_t> shape, double fill = 0.0,
                  bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                          std::multiplies<>());
    entries_.push_back({name, std::move(shape), std::vector<double>(n, fill),
                        std::vector<double>(n, 0.0), trainable});
    index_[name] = entries_.size() - 1;
    return entries_.size() - 1;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  ParamEntry& entry(std::size_t i) { return entries_.at(i); }
  const ParamEntry& entry(std::size_t i) const { return entries_.at(i); }
  ParamEntry& operator[](const std::string& name) { return entries_[id(name)]; }
  const ParamEntry& operator[](const std::string& name) const { return entries_[id(name)]; }

  std::span<double> value(std::size_t i) { return entries_[i].value; }
  std::span<const double> value(std::size_t i) const { return entries_[i].value; }
  std::span<double> grad(std::size_t i) { return entries_[i].grad; }

  // Adds into the gradient of entry i.
  void accumulate(std::size_t i, std::span<const double> g) {
    auto& e = entries_[i].grad;
    if (g.size() != e.size()) throw ShapeError("gradient size mismatch for " + entries_[i].name);
    for (std::size_t k = 0; k < g.size(); ++k) e[k] += g[k];
  }

  void zero_grad() {
    for (auto& e : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.count();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool operator==(const ParamStore& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name != o.entries_[i].name || entries_[i].shape != o.entries_[i].shape ||
          entries_[i].value != o.entries_[i].value)
        return false;
    return true;
  }

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Plain gradient descent on trainable entries, then zeroes all gradients.
/// Rejects the whole step (no value touched) if any gradient is non-finite.
inline void sgd_step(ParamStore& params, double learning_rate) {
  for (const auto& e : params)
    if (e.trainable)
      for (double g : e.grad)
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in '" + e.name + "'");
  for (auto& e : params) {
    if (!e.trainable) continue;
    for (std::size_t k = 0; k < e.value.size(); ++k) e.value[k] -= learning_rate * e.grad[k];
  }
  params.zero_grad();
}

// Loss callback contract: evaluate the loss at the store's current values and
// ADD analytic gradients into store.grad (the caller zeroes beforehand).
using LossFn = std::function<double(ParamStore&)>;

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  bool pass = true;
  double worst() const {
    double w = 0.0;
    for (const auto& p : params) w = std::max(w, p.max_rel_error);
    return w;
  }
};

/// Central-difference check of every trainable scalar against the analytic
/// gradient. Relative error is |a-n| / max(|a|, |n|, 1e-12).
inline GradCheckReport finite_diff_grad_check(const LossFn& loss, ParamStore& params,
                                              double epsilon, double tolerance) {
  if (!(epsilon > 0.0)) throw ConfigError("grad check epsilon must be positive");
  auto eval = [&](ParamStore& p) {
    const double v = loss(p);
    if (!std::isfinite(v)) throw NumericError("grad check: loss is not finite");
    return v;
  };
  params.zero_grad();
  eval(params);
  std::vector<std::vector<double>> analytic;
  for (const auto& e : params) analytic.push_back(e.grad);

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.entry(i).trainable) continue;
    ParamCheck pc{params.entry(i).name};
    for (std::size_t k = 0; k < params.entry(i).count(); ++k) {
      const double orig = params.entry(i).value[k];
      params.entry(i).value[k] = orig + epsilon;
      params.zero_grad();
      const double up = eval(params);
      params.entry(i).value[k] = orig - epsilon;
      params.zero_grad();
      const double down = eval(params);
      params.entry(i).value[k] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[i][k];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-12});
      pc.max_rel_error = std::max(pc.max_rel_error, rel);
      pc.max_abs_error = std::max(pc.max_abs_error, abs_err);
    }
    pc.pass = pc.max_rel_error < tolerance;
    report.pass = report.pass && pc.pass;
    report.params.push_back(pc);
  }
  params.zero_grad();
  for (std::size_t i = 0; i < params.size(); ++i) params.entry(i).grad = analytic[i];
  return report;
}

}  // namespace ielkit
