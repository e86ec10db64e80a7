#include "dagankit/gan_pipeline.hpp"

#include <cmath>

namespace dagankit {

GanTrainer::GanTrainer(GanModel& model, const DepthNet& frozen_depth, const GanTrainConfig& cfg)
    : model_(model),
      depth_(frozen_depth),
      cfg_(cfg),
      gen_adam_(AdamConfig{cfg.lr, 0.5, 0.999, 1e-8}),
      disc_adam_(AdamConfig{cfg.lr, 0.5, 0.999, 1e-8}),
      rng_(cfg.seed ^ 0xabcdef12345ull) {
  if (cfg.sequences < 1 || cfg.frames_per_sequence < 2) {
    throw ShapeError("train_gan: corpus needs at least one two-frame sequence");
  }
  PuppetParams pp = cfg_.puppet;
  pp.width = cfg_.width;
  pp.height = cfg_.height;
  for (int s = 0; s < cfg_.sequences; ++s) {
    corpus_.push_back(gen_puppet_sequence(cfg_.seed * 7907ull + s, cfg_.frames_per_sequence, pp));
  }
  depth_cache_.resize(static_cast<size_t>(cfg_.sequences) * cfg_.frames_per_sequence);
  depth_ready_.assign(depth_cache_.size(), false);
}

const Tensor& GanTrainer::cached_depth(int seq, int frame) {
  const size_t idx = static_cast<size_t>(seq) * cfg_.frames_per_sequence + frame;
  if (!depth_ready_[idx]) {
    Binder frozen(nullptr);
    depth_cache_[idx] = depth_forward(depth_, frozen, corpus_[seq].frames[frame].image);
    depth_ready_[idx] = true;
  }
  return depth_cache_[idx];
}

GanStepRecord GanTrainer::step() {
  const int seq = rng_.uniform_int(cfg_.sequences);
  const int src_idx = rng_.uniform_int(cfg_.frames_per_sequence);
  int drv_idx = rng_.uniform_int(cfg_.frames_per_sequence - 1);
  if (drv_idx >= src_idx) ++drv_idx;
  const Tensor& src = corpus_[seq].frames[src_idx].image;
  const Tensor& drv = corpus_[seq].frames[drv_idx].image;
  const Affine2D equit = random_equivariance_transform(rng_);

  GanStepRecord rec;
  rec.step = steps_done_;
  try {
    // Generator graph (built before the discriminator update, used after).
    Tape gen_tape;
    Binder gen_bind(&gen_tape);
    GenerateDiagnostics diag;
    Tensor fake = generate(model_.generator, depth_, gen_bind, src, drv, &diag);

    // Discriminator step: driving real, generated fake detached.
    {
      Tape disc_tape;
      Binder disc_bind(&disc_tape);
      Tensor fake_detached(fake.shape(), fake.values());
      Tensor disc_loss = lsgan_disc_loss(model_.discriminator, disc_bind, drv, fake_detached);
      rec.discriminator = disc_loss.item();
      auto grads = disc_tape.backward(disc_loss);
      disc_adam_.step(disc_bind.bound(), grads);
    }

    // Generator step on the full objective, updated discriminator frozen.
    LossParts parts;
    parts.perceptual = perceptual_loss(model_.extractor, fake, drv);
    GanGeneratorTerms terms = lsgan_generator_terms(model_.discriminator, drv, fake);
    parts.gan = add(terms.adversarial, scale(terms.feature_matching, 10.0));
    parts.equivariance = equivariance_loss(model_.generator.keypoints, gen_bind, drv,
                                           cached_depth(seq, drv_idx), diag.driving_kp, equit);
    parts.distance_source = keypoint_distance_loss(diag.source_kp.points, cfg_.distance_alpha);
    parts.distance_driving = keypoint_distance_loss(diag.driving_kp.points, cfg_.distance_alpha);
    Tensor loss = total_loss(cfg_.weights, parts);
    if (cfg_.distance_surrogate) {
      Tensor surrogate = add(keypoint_distance_surrogate(diag.source_kp.points, cfg_.distance_alpha),
                             keypoint_distance_surrogate(diag.driving_kp.points, cfg_.distance_alpha));
      loss = add(loss, scale(surrogate, cfg_.weights.distance));
    }

    rec.perceptual = parts.perceptual.item();
    rec.gan = parts.gan.item();
    rec.equivariance = parts.equivariance.item();
    rec.distance = parts.distance_source + parts.distance_driving;
    rec.total = loss.item();

    auto grads = gen_tape.backward(loss);
    gen_adam_.step(gen_bind.bound(), grads);
  } catch (const NumericError& e) {
    throw NumericError("train_gan: aborted at step " + std::to_string(steps_done_) + ": " +
                       e.what());
  }
  ++steps_done_;
  return rec;
}

std::vector<GanStepRecord> train_gan(GanModel& model, const DepthNet& frozen_depth,
                                     const GanTrainConfig& cfg,
                                     const std::function<void(const GanStepRecord&)>& on_step) {
  GanTrainer trainer(model, frozen_depth, cfg);
  std::vector<GanStepRecord> records;
  records.reserve(cfg.steps);
  for (int i = 0; i < cfg.steps; ++i) {
    records.push_back(trainer.step());
    if (on_step) on_step(records.back());
  }
  return records;
}

SelfReenactEval eval_self_reenactment(const Generator& gen, const DepthNet& depth,
                                      const PuppetSequence& seq) {
  SelfReenactEval out;
  Binder eval(nullptr);
  const Tensor& source = seq.frames[0].image;
  for (size_t f = 1; f < seq.frames.size(); ++f) {
    const Tensor& target = seq.frames[f].image;
    Tensor generated = generate(gen, depth, eval, source, target);
    out.psnr += psnr(generated, target);
    out.baseline_psnr += psnr(source, target);
    ++out.frames;
  }
  if (out.frames > 0) {
    out.psnr /= out.frames;
    out.baseline_psnr /= out.frames;
  }
  return out;
}

CrossReenactEval eval_cross_reenactment(const Generator& gen, const DepthNet& depth,
                                        const PuppetSequence& source_seq,
                                        const PuppetSequence& driving_seq) {
  CrossReenactEval out;
  Binder eval(nullptr);
  const PuppetFrame& source = source_seq.frames[0];
  for (const PuppetFrame& driving : driving_seq.frames) {
    Tensor generated = generate(gen, depth, eval, source.image, driving.image);
    for (int part = 0; part < kPuppetParts; ++part) {
      const auto got = dominant_centroid(generated, part);
      const auto& want = driving.anchors[part];
      const auto& src_anchor = source.anchors[part];
      out.centroid_to_anchor += std::hypot(got[0] - want[0], got[1] - want[1]);
      out.source_to_anchor += std::hypot(src_anchor[0] - want[0], src_anchor[1] - want[1]);
      ++out.measurements;
    }
  }
  if (out.measurements > 0) {
    out.centroid_to_anchor /= out.measurements;
    out.source_to_anchor /= out.measurements;
  }
  return out;
}

}  // namespace dagankit
