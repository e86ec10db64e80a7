#pragma once

#include "dagankit/tensor.hpp"

namespace dagankit {

struct PhotometricConfig {
  double alpha = 0.8;  // weight of the (1-SSIM) term
  double c1 = 1e-4;    // 0.01^2
  double c2 = 9e-4;    // 0.03^2
  int window = 3;
  void validate() const;
};

// Mean local SSIM over [C,H,W] images in [0,1], computed per channel with a
// window-sized box filter and averaged. `valid` (optional [H,W] 0/1 mask)
// restricts the mean to windows fully inside the mask.
Tensor ssim(const Tensor& a, const Tensor& b, const PhotometricConfig& cfg,
            const Tensor* valid = nullptr);

// alpha * (1 - SSIM) + (1 - alpha) * mean |a-b|, masked pixels excluded from
// both terms with the means renormalized.
Tensor photometric_error(const Tensor& target, const Tensor& recon,
                         const PhotometricConfig& cfg, const Tensor* valid = nullptr);

// Graph-connected mean absolute difference.
Tensor l1_mean(const Tensor& a, const Tensor& b);

// Evaluation metrics (plain doubles, not graph-connected).
double psnr(const Tensor& a, const Tensor& b);  // 10*log10(1/MSE), capped at 99 dB
double l1(const Tensor& a, const Tensor& b);
double ssim_metric(const Tensor& a, const Tensor& b);

}  // namespace dagankit
