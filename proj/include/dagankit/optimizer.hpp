#pragma once

#include "dagankit/params.hpp"

namespace dagankit {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over whatever parameters a Binder registered this step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<std::pair<Param*, int>>& bound, const std::vector<Tensor>& grads);

  int steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  int t_ = 0;
};

}  // namespace dagankit
