#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dagankit/depth_pipeline.hpp"
#include "dagankit/gan_pipeline.hpp"

namespace dagankit {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Run settings; defaults follow the published values where stated (loss
// weights, alpha = 0.8, distance alpha = 0.2, 15 keypoints) and this
// project's resolved choices elsewhere.
struct RunConfig {
  int resolution = 64;
  int keypoints = 15;
  std::uint64_t seed = 1;

  double sigma = 0.1;
  double background_weight = 0.01;
  double photometric_alpha = 0.8;
  double distance_alpha = 0.2;
  bool distance_surrogate = false;
  LossWeights weights;

  int depth_steps = 2000;
  double depth_lr = 1e-3;
  double smoothness = 1e-4;
  int depth_batch = 4;
  int depth_scenes = 40;
  int depth_frames = 6;

  int gan_steps = 5000;
  double gan_lr = 2e-4;
  int gan_sequences = 24;
  int gan_frames = 8;

  DepthTrainConfig depth_config() const;
  GanTrainConfig gan_config() const;
  NetSizes net_sizes() const;
  void validate() const;
};

// Plain "key = value" lines; '#' comments. Unknown keys are rejected.
RunConfig load_config_file(const std::string& path, RunConfig base = {});
void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical text (sorted key=value lines) and its FNV-1a hash; the hash is
// stored in checkpoints so runs can be told apart.
std::string config_text(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace dagankit
