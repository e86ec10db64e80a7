#pragma once

#include "dagankit/attention.hpp"
#include "dagankit/photometric.hpp"

namespace dagankit {

struct LossWeights {
  double perceptual = 10.0;    // lambda_P
  double gan = 1.0;            // lambda_G
  double equivariance = 10.0;  // lambda_E
  double distance = 10.0;      // lambda_D
  void validate() const;
};

// Pyramid perceptual loss: scales {1, 1/2, 1/4, 1/8}, mean-L1 between
// extractor stage features of both images at every scale. Inputs below
// 16 px cannot build the coarsest level and are rejected.
Tensor perceptual_loss(const FeatureExtractor& extractor, const Tensor& generated,
                       const Tensor& target);

// Least-squares GAN arithmetic on prediction maps.
Tensor lsgan_disc_loss_from(const Tensor& real_pred, const Tensor& fake_pred);
Tensor lsgan_gen_loss_from(const Tensor& fake_pred);

// Discriminator-side pass: parameters bound through `bind`, the fake input
// already detached by the caller.
Tensor lsgan_disc_loss(const Discriminator& disc, Binder& bind, const Tensor& real,
                       const Tensor& fake_detached);

struct GanGeneratorTerms {
  Tensor adversarial;       // mean((D(fake)-1)^2), discriminator frozen
  Tensor feature_matching;  // sum of per-layer mean-L1 against detached real features
};

// Generator-side pass: discriminator parameters enter as constants, the real
// branch is detached, gradients reach the fake image only.
GanGeneratorTerms lsgan_generator_terms(const Discriminator& disc, const Tensor& real,
                                        const Tensor& fake);

// Known invertible 2-D warp for the equivariance constraint.
struct Affine2D {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;
  Affine2D inverse() const;
  static Affine2D identity() { return {}; }
};

// rotation <= 15 deg, scale in [0.8,1.2], |translation| <= 0.1.
Affine2D random_equivariance_transform(Rng& rng);

// Applies T to [K,2] points on the graph.
Tensor apply_affine_points(const Affine2D& t, const Tensor& points);

// sum_k |a_k - b_k|_1 over two keypoint sets.
Tensor keypoint_consistency_penalty(const Tensor& a, const Tensor& b);

// Warp image and depth by T, redetect, and accumulate
// sum_k |x_k - T^inv(x_{T(k)})|_1 over the K keypoints.
Tensor equivariance_loss(const KeypointNet& net, Binder& bind, const Tensor& image,
                         const Tensor& depth, const KeypointSet& base, const Affine2D& t);

// Appendix counter with sign(0) = 0 over ordered pairs i != j; zero gradient
// almost everywhere, applied as a plain value.
double keypoint_distance_loss(const Tensor& points, double alpha = 0.2);

// Differentiable stand-in sum_{i!=j} max(0, alpha - |x_i - x_j|_1), off by default.
Tensor keypoint_distance_surrogate(const Tensor& points, double alpha = 0.2);

struct LossParts {
  Tensor perceptual;
  Tensor gan;  // adversarial + 10 * feature matching
  Tensor equivariance;
  double distance_source = 0;
  double distance_driving = 0;
};

// Eq.-10 composition: lP LP + lG LG + lE LE(drv) + lD (LD(src) + LD(drv)).
Tensor total_loss(const LossWeights& weights, const LossParts& parts);

}  // namespace dagankit
