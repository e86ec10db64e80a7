#pragma once

#include "dagankit/losses.hpp"
#include "dagankit/optimizer.hpp"

namespace dagankit {

struct GanTrainConfig {
  int width = 64, height = 64;
  int steps = 5000;
  double lr = 2e-4;  // both players, beta = (0.5, 0.999)
  LossWeights weights;
  double distance_alpha = 0.2;
  bool distance_surrogate = false;
  std::uint64_t seed = 1;
  int sequences = 24;
  int frames_per_sequence = 8;
  PuppetParams puppet;
};

struct GanModel {
  NetSizes sizes;
  Generator generator;
  Discriminator discriminator;
  FeatureExtractor extractor;  // fixed random perceptual backbone

  GanModel(const NetSizes& s, std::uint64_t seed)
      : sizes(s),
        generator(s, seed),
        discriminator(s, Rng(seed * 0x9e3779b97f4a7c15ull + 21)),
        extractor(s, seed) {}
};

struct GanStepRecord {
  int step = 0;
  double perceptual = 0, gan = 0, equivariance = 0, distance = 0, total = 0;
  double discriminator = 0;
};

// Self-supervised training on puppet sequences: source and driving frames of
// one clip, discriminator step first (fake detached), then a generator step
// on the full objective. The depth net is frozen throughout.
class GanTrainer {
 public:
  GanTrainer(GanModel& model, const DepthNet& frozen_depth, const GanTrainConfig& cfg);

  GanStepRecord step();
  int steps_done() const { return steps_done_; }

 private:
  const Tensor& cached_depth(int seq, int frame);

  GanModel& model_;
  const DepthNet& depth_;
  GanTrainConfig cfg_;
  std::vector<PuppetSequence> corpus_;
  std::vector<Tensor> depth_cache_;
  std::vector<bool> depth_ready_;
  Adam gen_adam_, disc_adam_;
  Rng rng_;
  int steps_done_ = 0;
};

// Whole loop; records one line per step through the callback.
std::vector<GanStepRecord> train_gan(GanModel& model, const DepthNet& frozen_depth,
                                     const GanTrainConfig& cfg,
                                     const std::function<void(const GanStepRecord&)>& on_step =
                                         nullptr);

// --- Evaluation hooks for the acceptance protocol --------------------------------

struct SelfReenactEval {
  double psnr = 0;           // generated vs. driving ground truth
  double baseline_psnr = 0;  // copy-source-frame baseline
  int frames = 0;
};

// Source = first frame, driving = the rest of the same held-out sequence.
SelfReenactEval eval_self_reenactment(const Generator& gen, const DepthNet& depth,
                                      const PuppetSequence& seq);

struct CrossReenactEval {
  // mean dist(generated part centroid, driving anchor) over parts/frames,
  // and the same distance for the untouched source frame.
  double centroid_to_anchor = 0;
  double source_to_anchor = 0;
  int measurements = 0;
  double ratio() const { return source_to_anchor > 0 ? centroid_to_anchor / source_to_anchor : 0; }
};

CrossReenactEval eval_cross_reenactment(const Generator& gen, const DepthNet& depth,
                                        const PuppetSequence& source_seq,
                                        const PuppetSequence& driving_seq);

}  // namespace dagankit
