#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dagankit/camera.hpp"
#include "dagankit/tensor.hpp"

namespace dagankit {

// --- Depth scenes: textured planes with exact geometry -------------------------

struct DepthSceneParams {
  int width = 64;
  int height = 64;
  int frames = 4;
  double fg_depth_min = 1.0;
  double fg_depth_max = 3.0;
  double bg_depth_min = 8.0;
  double bg_depth_max = 12.0;
  double max_tilt_deg = 20.0;
  double translation_frac = 0.018;  // per-step |t| as a fraction of fg depth
  double max_rotation_deg = 1.2;   // per-step rotation
  void validate() const;
};

struct DepthFrame {
  Tensor image;                     // [3,H,W] in [0,1]
  Tensor depth;                     // [H,W] camera z-depth
  std::vector<std::uint8_t> foreground;  // H*W flags, 1 = foreground plane
};

struct DepthScene {
  Intrinsics intrinsics;
  std::vector<DepthFrame> frames;
  // source<-target transform for the consecutive pair (i, i+1).
  std::vector<RelativePose> pair_pose;
};

DepthScene gen_depth_scene(std::uint64_t seed, const DepthSceneParams& params);

struct DepthPair {
  Tensor target, source;  // [3,H,W]
  Tensor target_depth;    // [H,W]
  RelativePose pose;      // source<-target
  Intrinsics intrinsics;
  std::vector<std::uint8_t> foreground;
};

DepthPair gen_depth_pair(std::uint64_t seed, const DepthSceneParams& params);

// --- Puppet sequences: face proxies with known part trajectories ----------------

struct PuppetParams {
  int width = 64;
  int height = 64;
  double walk_step = 0.05;   // per-frame anchor step bound (normalized units)
  double local_bound = 0.16; // max part drift from its base position
  double head_step = 0.025;  // per-frame head translation bound
  double head_bound = 0.10;
  void validate() const;
};

inline constexpr int kPuppetParts = 3;

struct PuppetFrame {
  Tensor image;  // [3,H,W]
  std::array<std::array<double, 2>, kPuppetParts> anchors;  // normalized part centers
};

struct PuppetSequence {
  std::vector<PuppetFrame> frames;
};

PuppetSequence gen_puppet_sequence(std::uint64_t seed, int length, const PuppetParams& params);

// One frame with explicit head offset and absolute part anchors; textures and
// colors are derived from the seed alone, so frames of one sequence share
// their appearance.
PuppetFrame render_puppet_frame(std::uint64_t seed, const PuppetParams& params,
                                const std::array<double, 2>& head,
                                const std::array<std::array<double, 2>, kPuppetParts>& anchors);

// Soft centroid (normalized coordinates) of pixels dominated by one RGB
// channel; the measurement device for puppet part positions.
std::array<double, 2> dominant_centroid(const Tensor& image, int channel);

}  // namespace dagankit
