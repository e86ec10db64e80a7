#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dagankit/rng.hpp"
#include "dagankit/tensor.hpp"

namespace dagankit {

// One learnable tensor plus its Adam state.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> m, v;  // first/second moment, sized on first use

  Tensor tensor() const { return Tensor(shape, value); }
  int count() const { return static_cast<int>(value.size()); }
};

// Named parameters of one network. Insertion order is the canonical
// (checkpoint and optimizer) order; entries are reference-stable.
class ParamStore {
 public:
  explicit ParamStore(std::string prefix) : prefix_(std::move(prefix)) {}

  Param& add(const std::string& name, Shape shape, std::vector<double> init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::string& prefix() const { return prefix_; }
  std::deque<Param>& entries() { return params_; }
  const std::deque<Param>& entries() const { return params_; }
  int total_values() const;

  // FNV-1a over the exact parameter bytes, for frozen-net contracts.
  std::uint64_t checksum() const;

 private:
  std::string prefix_;
  std::deque<Param> params_;
  std::unordered_map<std::string, int> index_;
};

// Per-step bridge between parameter storage and a differentiation graph.
// With a tape, parameters enter as leaves and are remembered for the
// optimizer; without one (frozen or evaluation passes) they enter as
// constants and the graph never sees them. A parameter used by several
// forward passes on one tape binds to a single leaf, so its gradient
// contributions accumulate.
class Binder {
 public:
  explicit Binder(Tape* tape) : tape_(tape) {}

  Tensor operator()(Param& p);

  bool training() const { return tape_ != nullptr; }
  const std::vector<std::pair<Param*, int>>& bound() const { return bound_; }

 private:
  Tape* tape_;
  std::vector<std::pair<Param*, int>> bound_;
  std::unordered_map<Param*, Tensor> cache_;
};

// --- Initializers ----------------------------------------------------------------

std::vector<double> he_normal(Rng& rng, int fan_in, int count, double gain = 1.0);

}  // namespace dagankit
