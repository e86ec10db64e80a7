#pragma once

#include <string>
#include <vector>

#include "dagankit/camera.hpp"
#include "dagankit/params.hpp"

namespace dagankit {

// Channel widths for the scaled-down desk nets.
struct NetSizes {
  int keypoints = 15;
  // depth / pose
  int depth_c1 = 16, depth_c2 = 32, depth_c3 = 64, depth_c4 = 64;
  int pose_c1 = 16, pose_c2 = 32, pose_c3 = 48, pose_c4 = 48;
  // generator side
  int kp_c1 = 16, kp_c2 = 32, kp_dec = 16;
  int warp_c1 = 24;  // first block of E_I / E_d
  int warp_c = 48;   // C_w, the warped-feature width
  int attn_ca = 24;  // C_a, query/key projection width (C_w / 2)
  int occl_c = 24;
  int dec_c1 = 24, dec_c2 = 16;
  int disc_c1 = 16, disc_c2 = 32, disc_c3 = 48, disc_c4 = 48;
  int feat_c = 12;  // random feature extractor stage width
};

// 2-D convolution layer bound into a ParamStore.
struct Conv {
  Param* w = nullptr;
  Param* b = nullptr;
  int stride = 1;
  int pad = 1;
  Tensor operator()(Binder& bind, const Tensor& x) const {
    return bias_add(conv2d(x, bind(*w), stride, pad), bind(*b));
  }
};

Conv make_conv(ParamStore& store, Rng& rng, const std::string& name, int cin, int cout, int k,
               int stride, int pad, double gain = 1.0);

// Linear head on a feature vector.
struct Linear {
  Param* w = nullptr;
  Param* b = nullptr;
  Tensor operator()(Binder& bind, const Tensor& x) const;  // x [n] -> [m]
};

Linear make_linear(ParamStore& store, Rng& rng, const std::string& name, int in, int out,
                   double gain = 1.0);

// --- Depth network (encoder-decoder with skips, sigmoid disparity head) --------

class DepthNet {
 public:
  DepthNet(const NetSizes& sizes, Rng rng);
  // image [3,H,W] (H, W divisible by 16) -> disparity [1,H,W] in (0,1)
  Tensor forward(Binder& bind, const Tensor& image) const;
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  ParamStore store_{"depth"};
  Conv enc1_, enc2_, enc3_, enc4_;
  Conv dec3_, dec2_, dec1_, dec0_;
  Conv head_;
};

// --- Pose network -----------------------------------------------------------------

struct PoseRaw {
  Tensor rotation;     // [3]
  Tensor translation;  // [3]
  Tensor intrinsics;   // [4]
};

class PoseNet {
 public:
  PoseNet(const NetSizes& sizes, Rng rng);
  // pair [6,H,W] -> raw heads (zero heads decode to the identity pose)
  PoseRaw forward(Binder& bind, const Tensor& pair) const;
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  ParamStore store_{"pose"};
  Conv c1_, c2_, c3_, c4_;
  Linear rot_, trans_, intr_;
};

// Raw-head decoding: R = rodrigues(0.01 raw), t = 0.01 raw,
// fx,fy = softplus(raw) * W, cx = W sigmoid(raw), cy = H sigmoid(raw).
CameraTensors decode_pose(const PoseRaw& raw, int width, int height);

// --- Keypoint detector (hourglass on RGB-D) ------------------------------------

struct KeypointOutput {
  Tensor points;    // [K,2] in [-1,1], soft-argmax readout
  Tensor heatmaps;  // [K,Hh,Wh], spatially softmaxed (each sums to 1)
};

class KeypointNet {
 public:
  KeypointNet(const NetSizes& sizes, Rng rng);
  // rgbd [4,H,W] -> K keypoints; heatmaps live at H/2 x W/2
  KeypointOutput forward(Binder& bind, const Tensor& rgbd) const;
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  int keypoint_count() const { return k_; }

 private:
  int k_;
  ParamStore store_{"kp"};
  Conv enc1_, enc2_, dec1_, head_;
};

// --- Occlusion estimator ------------------------------------------------------------

struct OcclusionMasks {
  Tensor motion_mask;     // M_m in (0,1), [1,h,w]
  Tensor occlusion_map;   // M_o in (0,1), [1,h,w]
};

class OcclusionNet {
 public:
  OcclusionNet(const NetSizes& sizes, Rng rng);
  // warped downsampled image [3,h,w] -> two sigmoid masks
  OcclusionMasks forward(Binder& bind, const Tensor& warped) const;
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  ParamStore store_{"occl"};
  Conv c1_, c2_, head_m_, head_o_;
};

// --- Feature encoders (E_I on RGB, E_d on depth) -------------------------------

class FeatureEncoder {
 public:
  FeatureEncoder(const std::string& prefix, int in_channels, const NetSizes& sizes, Rng rng);
  // [C,H,W] -> [C_w, H/4, W/4]
  Tensor forward(Binder& bind, const Tensor& x) const;
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  ParamStore store_;
  Conv c1_, c2_;
};

// --- Cross-modal attention projections ----------------------------------------------

class AttentionParams {
 public:
  AttentionParams(const NetSizes& sizes, Rng rng);
  Tensor query(Binder& bind, const Tensor& f_d) const { return wq_(bind, f_d); }
  Tensor key(Binder& bind, const Tensor& f_w) const { return wk_(bind, f_w); }
  Tensor value(Binder& bind, const Tensor& f_w) const { return wv_(bind, f_w); }
  int ca() const { return ca_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  int ca_;
  ParamStore store_{"attn"};
  Conv wq_, wk_, wv_;  // independent 1x1 projections
};

// --- Generator decoder ----------------------------------------------------------------

class GenDecoder {
 public:
  GenDecoder(const NetSizes& sizes, Rng rng);
  // F_g [C_w,h,w] -> image [3,4h,4w] in (0,1)
  Tensor forward(Binder& bind, const Tensor& f_g) const;
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  ParamStore store_{"decoder"};
  Conv res1_, res2_, up1_, up2_, head_;
};

// --- Discriminator ------------------------------------------------------------------------

struct DiscOutput {
  Tensor prediction;            // [1,h,w] map
  std::vector<Tensor> features; // intermediate activations, shallow to deep
};

class Discriminator {
 public:
  Discriminator(const NetSizes& sizes, Rng rng);
  DiscOutput forward(Binder& bind, const Tensor& image) const;
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  ParamStore store_{"disc"};
  Conv c1_, c2_, c3_, c4_, head_;
};

// --- Fixed random feature extractor (perceptual-loss backbone) -----------------------

class FeatureExtractor {
 public:
  FeatureExtractor(const NetSizes& sizes, std::uint64_t seed);
  // 4 stage outputs; parameters are frozen at construction and never bound
  // to a graph, so gradients flow to the input image only.
  std::vector<Tensor> stages(const Tensor& image) const;
  ParamStore& params() { return store_; }  // external-weights hook

 private:
  ParamStore store_{"featex"};
  Conv c1_, c2_, c3_, c4_;
};

}  // namespace dagankit
