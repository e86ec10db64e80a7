#pragma once

#include "dagankit/nets.hpp"

namespace dagankit {

// Depth normalized to [0,1] for RGB-D concatenation: (D - d_min)/(d_max - d_min).
Tensor normalize_depth(const Tensor& depth);  // [H,W] -> [1,H,W]

struct KeypointSet {
  Tensor points;    // [K,2] in [-1,1]
  Tensor heatmaps;  // [K,Hh,Wh], each summing to 1
};

// Runs the detector on the RGB-D concatenation (Eq. 6 role).
KeypointSet detect_keypoints(const KeypointNet& net, Binder& bind, const Tensor& image,
                             const Tensor& depth);

// Per-keypoint source-minus-driving displacements.
Tensor keypoint_offsets(const KeypointSet& src, const KeypointSet& drv);  // [K,2]

struct MotionFieldConfig {
  double sigma = 0.1;              // Gaussian splat width, normalized units
  double background_weight = 0.01; // stationary-background weight
};

// Dense coordinate field w_m(z) = z + sum_n wn_hat(z) O_n with normalized
// Gaussian weights centered on the driving keypoints. Exactly the identity
// grid when all offsets vanish.
Tensor build_motion_field(const Tensor& offsets, const Tensor& drv_points, int h, int w,
                          const MotionFieldConfig& cfg);

struct MotionBundle {
  Tensor field;          // w_m [h,w,2]
  Tensor motion_mask;    // M_m [1,h,w]
  Tensor occlusion_map;  // M_o [1,h,w]
};

// Warps the 4x-downsampled source image by w_m and runs the occlusion
// estimator on the result.
OcclusionMasks occlusion_forward(const OcclusionNet& net, Binder& bind, const Tensor& image,
                                 const Tensor& field);

// F_w = M_o * sample(E_I(I_s), M_m-gated field). The confidence mask gates
// the displacement (M_m * (w_m - z) + z): the paper's literal mask-times-
// coordinates product would send low-confidence pixels toward the origin
// instead of leaving them in place.
Tensor warp_features(const FeatureEncoder& encoder, Binder& bind, const Tensor& source_image,
                     const MotionBundle& bundle);

// Keypoints as "n,x,y" rows for visualization tooling.
std::string keypoints_to_text(const Tensor& points);

}  // namespace dagankit
