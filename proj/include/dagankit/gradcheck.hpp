#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dagankit/tensor.hpp"

namespace dagankit {

// Builds a scalar loss from leafed inputs on the given tape. The same closure
// is re-invoked on constant (perturbed) inputs for the finite-difference side,
// so it must not keep state between calls.
using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradReport {
  std::string name;
  // Per input, flattened analytic and central-difference gradients.
  std::vector<std::vector<double>> analytic;
  std::vector<std::vector<double>> numeric;
  double max_rel_err = 0.0;

  bool pass(double tol) const { return max_rel_err < tol; }
};

// Central differences (f(x+eps) - f(x-eps)) / 2eps per coordinate; the
// relative error is |a - f| / max(|a|, |f|, 1e-8).
GradReport finite_diff_check(const std::string& name, const ScalarFn& fn,
                             const std::vector<Tensor>& inputs, double eps);

double grad_rel_err(double analytic, double numeric);

}  // namespace dagankit
