#pragma once

#include "dagankit/depth_pipeline.hpp"
#include "dagankit/motion.hpp"

namespace dagankit {

// Depth feature map F_d from the normalized source depth, at F_w's resolution.
Tensor depth_encode(const FeatureEncoder& enc, Binder& bind, const Tensor& depth_norm);

struct AttentionOutput {
  Tensor refined;    // F_g [C_w,h,w]
  Tensor attention;  // A [(hw),(hw)], rows sum to 1
};

// F_g = softmax((W_q F_d)(W_k F_w)^T / sqrt(C_a)) (W_v F_w), queries from the
// depth side, keys/values from the warped appearance.
AttentionOutput cross_attention(const AttentionParams& params, Binder& bind, const Tensor& f_d,
                                const Tensor& f_w);

// All generator-side networks (the depth net stays outside: frozen input).
struct Generator {
  NetSizes sizes;
  KeypointNet keypoints;
  OcclusionNet occlusion;
  FeatureEncoder appearance;  // E_I
  FeatureEncoder depth_enc;   // E_d
  AttentionParams attention;
  GenDecoder decoder;
  MotionFieldConfig motion;

  Generator(const NetSizes& s, std::uint64_t seed);

  std::vector<ParamStore*> param_stores();
  std::vector<const ParamStore*> param_stores() const;
};

struct GenerateDiagnostics {
  Tensor source_depth, driving_depth;  // [1,H,W]
  KeypointSet source_kp, driving_kp;
  MotionBundle bundle;
  Tensor attention;  // A
};

// Full pipeline: frozen depth on both frames, depth-guided keypoints,
// motion bundle, feature warp, cross-modal refinement, decode.
Tensor generate(const Generator& gen, const DepthNet& frozen_depth, Binder& bind,
                const Tensor& source, const Tensor& driving,
                GenerateDiagnostics* diag = nullptr);

}  // namespace dagankit
