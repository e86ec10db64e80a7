#include "dagankit/depth_pipeline.hpp"

#include <cmath>

#include "dagankit/metrics.hpp"

namespace dagankit {

Tensor disparity_to_depth(const Tensor& disparity) {
  if (disparity.rank() != 3 || disparity.extent(0) != 1) {
    throw ShapeError("disparity_to_depth: expects [1,H,W], got " + shape_str(disparity.shape()));
  }
  const double a = 1.0 / kDepthMin - 1.0 / kDepthMax;
  const double b = 1.0 / kDepthMax;
  Tensor inv = add_scalar(scale(disparity, a), b);
  return reshape(div(Tensor::scalar(1.0), inv), {disparity.extent(1), disparity.extent(2)});
}

Tensor depth_forward(const DepthNet& net, Binder& bind, const Tensor& image) {
  return disparity_to_depth(net.forward(bind, image));
}

namespace {

Tensor channel(const Tensor& image, int c) {
  const int h = image.extent(1), w = image.extent(2);
  return reshape(take(image, c * h * w, h * w), {1, h, w});
}

// Edge-aware mean |d disparity| weighted by exp(-|d image|).
Tensor smoothness_term(const Tensor& disparity, const Tensor& image) {
  const int h = disparity.extent(1), w = disparity.extent(2);
  Tensor gray = scale(add(add(channel(image, 0), channel(image, 1)), channel(image, 2)),
                      1.0 / 3.0);

  Tensor dx = sub(crop(disparity, 0, 1, h, w - 1), crop(disparity, 0, 0, h, w - 1));
  Tensor gx = sub(crop(gray, 0, 1, h, w - 1), crop(gray, 0, 0, h, w - 1));
  Tensor wx = exp(neg(abs(gx)));  // image constant: plain weights

  Tensor dy = sub(crop(disparity, 1, 0, h - 1, w), crop(disparity, 0, 0, h - 1, w));
  Tensor gy = sub(crop(gray, 1, 0, h - 1, w), crop(gray, 0, 0, h - 1, w));
  Tensor wy = exp(neg(abs(gy)));

  return add(mean(mul(abs(dx), wx)), mean(mul(abs(dy), wy)));
}

struct PairLoss {
  Tensor total;
  double photometric, smooth;
};

PairLoss pair_loss(DepthModel& model, Binder& bind, const FramePair& pair,
                   const DepthTrainConfig& cfg) {
  Tensor disparity = model.depth.forward(bind, pair.target);
  Tensor depth = disparity_to_depth(disparity);
  PoseRaw raw = model.pose.forward(bind, concat({pair.target, pair.source}));
  CameraTensors cam = decode_pose(raw, cfg.width, cfg.height);
  ReprojectResult repro = reproject(depth, cam);
  ViewSynthesis synth = synthesize_view(pair.source, repro);
  Tensor pe = photometric_error(pair.target, synth.image, cfg.photometric, &synth.valid);
  PairLoss out;
  if (cfg.smoothness > 0.0) {
    Tensor smooth = smoothness_term(disparity, pair.target);
    out.total = add(pe, scale(smooth, cfg.smoothness));
    out.smooth = smooth.item();
  } else {
    out.total = pe;
    out.smooth = 0.0;
  }
  out.photometric = pe.item();
  return out;
}

}  // namespace

DepthStepStats depth_train_step(DepthModel& model, Adam& adam,
                                const std::vector<FramePair>& batch,
                                const DepthTrainConfig& cfg) {
  if (batch.empty()) throw ShapeError("depth_train_step: empty batch");
  Tape tape;
  Binder bind(&tape);
  DepthStepStats stats;
  Tensor total;
  for (size_t i = 0; i < batch.size(); ++i) {
    PairLoss pl = pair_loss(model, bind, batch[i], cfg);
    stats.photometric += pl.photometric / batch.size();
    stats.smoothness += pl.smooth / batch.size();
    total = i == 0 ? pl.total : add(total, pl.total);
  }
  Tensor loss = scale(total, 1.0 / batch.size());
  stats.loss = loss.item();
  auto grads = tape.backward(loss);
  adam.step(bind.bound(), grads);
  return stats;
}

DepthTrainResult train_depth(DepthModel& model, const DepthTrainConfig& cfg,
                             const std::function<void(int, double)>& progress) {
  if (cfg.scenes < 1 || cfg.frames_per_scene < 2) {
    throw ShapeError("train_depth: corpus must contain at least one two-frame scene");
  }
  DepthSceneParams sp = cfg.scene;
  sp.width = cfg.width;
  sp.height = cfg.height;
  sp.frames = cfg.frames_per_scene;

  std::vector<FramePair> pairs;
  for (int s = 0; s < cfg.scenes; ++s) {
    DepthScene scene = gen_depth_scene(cfg.seed * 1000003ull + s, sp);
    for (int f = 0; f + 1 < cfg.frames_per_scene; ++f) {
      pairs.push_back(FramePair{scene.frames[f].image, scene.frames[f + 1].image});
    }
  }

  Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Rng order(cfg.seed ^ 0xd1ce5bull);
  DepthTrainResult result;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<FramePair> batch;
    for (int b = 0; b < cfg.batch; ++b) {
      batch.push_back(pairs[order.uniform_int(static_cast<int>(pairs.size()))]);
    }
    DepthStepStats stats;
    try {
      stats = depth_train_step(model, adam, batch, cfg);
    } catch (const NumericError& e) {
      throw NumericError("train_depth: aborted at step " + std::to_string(step) + ": " +
                         e.what());
    }
    result.curve.emplace_back(step, stats.loss);
    if (progress) progress(step, stats.loss);
  }
  return result;
}

DepthEvalResult evaluate_depth(const DepthNet& net, std::uint64_t holdout_seed, int frames,
                               const DepthSceneParams& scene) {
  DepthSceneParams sp = scene;
  sp.frames = 2;
  DepthEvalResult out;
  std::vector<double> rhos, rels;
  std::vector<double> pooled_pred, pooled_truth;
  Binder eval(nullptr);
  for (int i = 0; i < frames; ++i) {
    DepthPair pair = gen_depth_pair(holdout_seed * 7919ull + i, sp);
    Tensor depth = depth_forward(net, eval, pair.target);
    std::vector<double> pred, truth;
    for (int p = 0; p < depth.count(); ++p) {
      if (pair.foreground[p]) {
        pred.push_back(depth.at(p));
        truth.push_back(pair.target_depth.at(p));
      }
    }
    if (pred.size() < 16) continue;  // foreground fell outside the view
    pooled_pred.insert(pooled_pred.end(), pred.begin(), pred.end());
    pooled_truth.insert(pooled_truth.end(), truth.begin(), truth.end());
    rhos.push_back(spearman(pred, truth));
    rels.push_back(median_scaled_abs_rel(pred, truth));
  }
  out.frames = static_cast<int>(rhos.size());
  out.spearman = spearman(pooled_pred, pooled_truth);
  for (double r : rhos) out.spearman_per_frame += r / rhos.size();
  for (double r : rels) out.abs_rel_mean += r / rels.size();
  return out;
}

}  // namespace dagankit
