#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "dagankit/nets.hpp"
#include "dagankit/optimizer.hpp"
#include "dagankit/photometric.hpp"
#include "dagankit/synthetic.hpp"

namespace dagankit {

// Sigmoid disparity -> depth, a bijection from (0,1) onto (d_min, d_max).
Tensor disparity_to_depth(const Tensor& disparity);  // [1,H,W] -> [H,W]

// Runs the depth net and converts to metric depth.
Tensor depth_forward(const DepthNet& net, Binder& bind, const Tensor& image);

struct FramePair {
  Tensor target;  // I_i
  Tensor source;  // I_{i+1}
};

struct DepthTrainConfig {
  int width = 64, height = 64;
  int steps = 2000;
  int batch = 4;
  double lr = 1e-4;
  double smoothness = 1e-3;  // lambda_s; 0 matches the bare photometric objective
  std::uint64_t seed = 1;
  int scenes = 40;
  int frames_per_scene = 6;
  DepthSceneParams scene;
  PhotometricConfig photometric;
};

struct DepthModel {
  NetSizes sizes;
  DepthNet depth;
  PoseNet pose;
  DepthModel(const NetSizes& s, std::uint64_t seed)
      : sizes(s), depth(s, seed_rng(seed, 1)), pose(s, seed_rng(seed, 2)) {}

 private:
  static Rng seed_rng(std::uint64_t seed, std::uint64_t salt) {
    return Rng(seed * 0x9e3779b97f4a7c15ull + salt);
  }
};

struct DepthStepStats {
  double loss = 0, photometric = 0, smoothness = 0;
};

// One optimizer step over a batch of pairs (forward, backward, Adam update).
DepthStepStats depth_train_step(DepthModel& model, Adam& adam,
                                const std::vector<FramePair>& batch,
                                const DepthTrainConfig& cfg);

struct DepthTrainResult {
  std::vector<std::pair<int, double>> curve;  // (step, loss)
};

// Full training loop over an in-memory synthetic corpus, deterministic in
// cfg.seed. Non-finite losses abort with the offending step index.
DepthTrainResult train_depth(DepthModel& model, const DepthTrainConfig& cfg,
                             const std::function<void(int, double)>& progress = nullptr);

struct DepthEvalResult {
  double spearman = 0;        // over the pooled foreground pixels of all frames
  double spearman_per_frame = 0;  // per-frame Spearman, averaged (diagnostic)
  double abs_rel_mean = 0;    // median-scaled absolute relative error
  int frames = 0;
};

// Held-out evaluation on freshly generated scenes (seeds disjoint from
// training when holdout_seed differs).
DepthEvalResult evaluate_depth(const DepthNet& net, std::uint64_t holdout_seed, int frames,
                               const DepthSceneParams& scene);

}  // namespace dagankit
