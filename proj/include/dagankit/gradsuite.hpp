#pragma once

#include <string>
#include <vector>

#include "dagankit/gradcheck.hpp"

namespace dagankit {

struct GradSuiteEntry {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  bool pass = false;
};

struct GradSuiteReport {
  std::vector<GradSuiteEntry> entries;
  bool all_pass = false;
};

// Central-difference verification of every differentiable primitive (five
// random small instances each, away from non-smooth points) plus the three
// composite paths: photometric error through reprojection, warped features
// through the motion bundle, and refined features through cross-modal
// attention.
GradSuiteReport run_gradcheck_suite(std::uint64_t seed);

}  // namespace dagankit
