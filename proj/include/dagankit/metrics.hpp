#pragma once

#include <vector>

namespace dagankit {

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// mean |pred*s - gt| / gt with s chosen as median(gt)/median(pred); the
// scale-free depth error used alongside rank correlation.
double median_scaled_abs_rel(const std::vector<double>& pred, const std::vector<double>& gt);

}  // namespace dagankit
