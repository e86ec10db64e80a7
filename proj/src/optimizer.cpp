#include "dagankit/optimizer.hpp"

#include <cmath>

namespace dagankit {

void Adam::step(const std::vector<std::pair<Param*, int>>& bound,
                const std::vector<Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (const auto& [param, node] : bound) {
    Param& p = *param;
    const auto& g = grads[node].values();
    if (p.m.empty()) {
      p.m.assign(p.value.size(), 0.0);
      p.v.assign(p.value.size(), 0.0);
    }
    for (size_t i = 0; i < p.value.size(); ++i) {
      p.m[i] = cfg_.beta1 * p.m[i] + (1.0 - cfg_.beta1) * g[i];
      p.v[i] = cfg_.beta2 * p.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace dagankit
