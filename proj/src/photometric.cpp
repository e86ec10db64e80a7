#include "dagankit/photometric.hpp"

#include <cmath>

namespace dagankit {

void PhotometricConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ShapeError("photometric: alpha must be in [0,1]");
  if (c1 <= 0.0 || c2 <= 0.0) throw ShapeError("photometric: C1 and C2 must be positive");
  if (window < 3 || window % 2 == 0) throw ShapeError("photometric: window must be odd and >= 3");
}

namespace {

void check_pair(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3) {
    throw ShapeError(std::string(op) + ": expects [C,H,W] images");
  }
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// 0/1 map of windows fully covered by the mask, or an empty tensor.
Tensor window_mask(const Tensor* valid, int c, int window) {
  if (valid == nullptr) return Tensor();
  Tensor m3 = reshape(*valid, {1, valid->extent(0), valid->extent(1)});
  Tensor pooled = box_filter(m3, window);
  std::vector<double> wm(pooled.count());
  for (int i = 0; i < pooled.count(); ++i) wm[i] = pooled.at(i) > 1.0 - 1e-9 ? 1.0 : 0.0;
  Tensor one = Tensor({1, pooled.extent(1), pooled.extent(2)}, std::move(wm));
  return tile_channels(one, c);
}

// Mean of `x` where the 0/1 mask is set; plain mean when mask is empty.
Tensor masked_mean(const Tensor& x, const Tensor& mask, const char* op) {
  if (mask.count() == 0) return mean(x);
  double total = 0.0;
  for (double v : mask.values()) total += v;
  if (total <= 0.0) throw ShapeError(std::string(op) + ": fully masked image");
  return scale(sum(mul(x, mask)), 1.0 / total);
}

}  // namespace

Tensor ssim(const Tensor& a, const Tensor& b, const PhotometricConfig& cfg,
            const Tensor* valid) {
  check_pair("ssim", a, b);
  cfg.validate();
  const int c = a.extent(0);

  Tensor mu_a = box_filter(a, cfg.window);
  Tensor mu_b = box_filter(b, cfg.window);
  Tensor var_a = sub(box_filter(mul(a, a), cfg.window), mul(mu_a, mu_a));
  Tensor var_b = sub(box_filter(mul(b, b), cfg.window), mul(mu_b, mu_b));
  Tensor cov = sub(box_filter(mul(a, b), cfg.window), mul(mu_a, mu_b));

  Tensor num = mul(add_scalar(scale(mul(mu_a, mu_b), 2.0), cfg.c1),
                   add_scalar(scale(cov, 2.0), cfg.c2));
  Tensor den = mul(add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), cfg.c1),
                   add_scalar(add(var_a, var_b), cfg.c2));
  Tensor ssim_map = div(num, den);

  return masked_mean(ssim_map, window_mask(valid, c, cfg.window), "ssim");
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("l1: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  return mean(abs(sub(a, b)));
}

Tensor photometric_error(const Tensor& target, const Tensor& recon,
                         const PhotometricConfig& cfg, const Tensor* valid) {
  check_pair("photometric_error", target, recon);
  cfg.validate();

  Tensor structural = ssim(target, recon, cfg, valid);
  Tensor l1_term;
  if (valid == nullptr) {
    l1_term = l1_mean(target, recon);
  } else {
    Tensor m = tile_channels(reshape(*valid, {1, valid->extent(0), valid->extent(1)}),
                             target.extent(0));
    l1_term = masked_mean(abs(sub(target, recon)), m, "photometric_error");
  }
  Tensor one_minus = sub(Tensor::scalar(1.0), structural);
  return add(scale(one_minus, cfg.alpha), scale(l1_term, 1.0 - cfg.alpha));
}

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("psnr: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double mse = 0.0;
  for (int i = 0; i < a.count(); ++i) {
    const double d = a.at(i) - b.at(i);
    mse += d * d;
  }
  mse /= a.count();
  if (mse < 1e-10) return 99.0;
  return 10.0 * std::log10(1.0 / mse);
}

double l1(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("l1: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double s = 0.0;
  for (int i = 0; i < a.count(); ++i) s += std::fabs(a.at(i) - b.at(i));
  return s / a.count();
}

double ssim_metric(const Tensor& a, const Tensor& b) {
  return ssim(a, b, PhotometricConfig{}).item();
}

}  // namespace dagankit
