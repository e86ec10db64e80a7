#include "dagankit/params.hpp"

#include <cmath>
#include <cstring>

namespace dagankit {

Param& ParamStore::add(const std::string& name, Shape shape, std::vector<double> init) {
  if (index_.count(name) > 0) throw ShapeError("param '" + name + "' already exists");
  if (shape_count(shape) != static_cast<int>(init.size())) {
    throw ShapeError("param '" + name + "': init size does not match shape");
  }
  index_[name] = static_cast<int>(params_.size());
  params_.push_back(Param{name, std::move(shape), std::move(init), {}, {}});
  return params_.back();
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown param '" + name + "'");
  return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown param '" + name + "'");
  return params_[it->second];
}

int ParamStore::total_values() const {
  int n = 0;
  for (const Param& p : params_) n += p.count();
  return n;
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const Param& p : params_) {
    mix(p.name.data(), p.name.size());
    mix(p.value.data(), p.value.size() * sizeof(double));
  }
  return h;
}

Tensor Binder::operator()(Param& p) {
  if (tape_ == nullptr) return p.tensor();
  auto it = cache_.find(&p);
  if (it != cache_.end()) return it->second;
  Tensor leaf = tape_->leaf(p.tensor());
  bound_.emplace_back(&p, leaf.node());
  cache_.emplace(&p, leaf);
  return leaf;
}

std::vector<double> he_normal(Rng& rng, int fan_in, int count, double gain) {
  const double stddev = gain * std::sqrt(2.0 / fan_in);
  std::vector<double> v(count);
  for (double& x : v) x = stddev * rng.normal();
  return v;
}

}  // namespace dagankit
