#include "dagankit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dagankit {

double grad_rel_err(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}

GradReport finite_diff_check(const std::string& name, const ScalarFn& fn,
                             const std::vector<Tensor>& inputs, double eps) {
  if (eps <= 0.0) throw ShapeError("finite_diff_check: epsilon must be positive");

  GradReport report;
  report.name = name;

  // Analytic pass.
  {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& x : inputs) leaves.push_back(tape.leaf(x));
    Tensor loss = fn(tape, leaves);
    if (loss.count() != 1) {
      throw ShapeError("finite_diff_check: closure must return a scalar");
    }
    auto grads = tape.backward(loss);
    for (const Tensor& leaf : leaves) {
      report.analytic.push_back(grads[leaf.node()].values());
    }
  }

  // Numeric pass: one graph-free evaluation per perturbed coordinate.
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    return fn(tape, xs).item();
  };
  for (size_t k = 0; k < inputs.size(); ++k) {
    const int n = inputs[k].count();
    std::vector<double> fd(n);
    for (int i = 0; i < n; ++i) {
      std::vector<Tensor> xs = inputs;
      std::vector<double> vplus = inputs[k].values();
      std::vector<double> vminus = vplus;
      vplus[i] += eps;
      vminus[i] -= eps;
      xs[k] = Tensor(inputs[k].shape(), std::move(vplus));
      const double fplus = eval(xs);
      xs[k] = Tensor(inputs[k].shape(), std::move(vminus));
      const double fminus = eval(xs);
      fd[i] = (fplus - fminus) / (2.0 * eps);
    }
    report.numeric.push_back(std::move(fd));
  }

  for (size_t k = 0; k < inputs.size(); ++k) {
    for (size_t i = 0; i < report.analytic[k].size(); ++i) {
      report.max_rel_err =
          std::max(report.max_rel_err, grad_rel_err(report.analytic[k][i], report.numeric[k][i]));
    }
  }
  return report;
}

}  // namespace dagankit
