#include "dagankit/losses.hpp"

#include <cmath>

namespace dagankit {

void LossWeights::validate() const {
  if (perceptual < 0 || gan < 0 || equivariance < 0 || distance < 0) {
    throw ShapeError("loss weights must be nonnegative");
  }
}

Tensor perceptual_loss(const FeatureExtractor& extractor, const Tensor& generated,
                       const Tensor& target) {
  if (generated.shape() != target.shape()) {
    throw ShapeError("perceptual_loss: shape mismatch " + shape_str(generated.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  if (generated.extent(1) < 16 || generated.extent(2) < 16) {
    throw ShapeError("perceptual_loss: image " + shape_str(generated.shape()) +
                     " too small for the 1/8-scale pyramid level (needs >= 16 px)");
  }
  Tensor loss;
  bool first = true;
  for (int factor : {1, 2, 4, 8}) {
    Tensor g = factor == 1 ? generated : avg_pool(generated, factor);
    Tensor t = factor == 1 ? target : avg_pool(target, factor);
    std::vector<Tensor> gs = extractor.stages(g);
    std::vector<Tensor> ts = extractor.stages(t);
    for (size_t s = 0; s < gs.size(); ++s) {
      Tensor term = l1_mean(gs[s], ts[s]);
      loss = first ? term : add(loss, term);
      first = false;
    }
  }
  return loss;
}

Tensor lsgan_disc_loss_from(const Tensor& real_pred, const Tensor& fake_pred) {
  Tensor real_err = add_scalar(real_pred, -1.0);
  return add(mean(mul(real_err, real_err)), mean(mul(fake_pred, fake_pred)));
}

Tensor lsgan_gen_loss_from(const Tensor& fake_pred) {
  Tensor err = add_scalar(fake_pred, -1.0);
  return mean(mul(err, err));
}

Tensor lsgan_disc_loss(const Discriminator& disc, Binder& bind, const Tensor& real,
                       const Tensor& fake_detached) {
  DiscOutput on_real = disc.forward(bind, real);
  DiscOutput on_fake = disc.forward(bind, fake_detached);
  return lsgan_disc_loss_from(on_real.prediction, on_fake.prediction);
}

GanGeneratorTerms lsgan_generator_terms(const Discriminator& disc, const Tensor& real,
                                        const Tensor& fake) {
  Binder frozen(nullptr);
  DiscOutput on_fake = disc.forward(frozen, fake);
  DiscOutput on_real = disc.forward(frozen, Tensor(real.shape(), real.values()));

  GanGeneratorTerms out;
  out.adversarial = lsgan_gen_loss_from(on_fake.prediction);
  bool first = true;
  for (size_t i = 0; i < on_fake.features.size(); ++i) {
    // Real-branch features are constants here (gradient-detached).
    Tensor term = l1_mean(on_fake.features[i],
                          Tensor(on_real.features[i].shape(), on_real.features[i].values()));
    out.feature_matching = first ? term : add(out.feature_matching, term);
    first = false;
  }
  return out;
}

Affine2D Affine2D::inverse() const {
  const double det = a * d - b * c;
  if (std::fabs(det) < 1e-12) throw NumericError("affine transform is not invertible");
  Affine2D inv;
  inv.a = d / det;
  inv.b = -b / det;
  inv.c = -c / det;
  inv.d = a / det;
  inv.tx = -(inv.a * tx + inv.b * ty);
  inv.ty = -(inv.c * tx + inv.d * ty);
  return inv;
}

Affine2D random_equivariance_transform(Rng& rng) {
  const double angle = rng.uniform(-15.0, 15.0) * 3.14159265358979 / 180.0;
  const double s = rng.uniform(0.8, 1.2);
  Affine2D t;
  t.a = s * std::cos(angle);
  t.b = -s * std::sin(angle);
  t.c = s * std::sin(angle);
  t.d = s * std::cos(angle);
  t.tx = rng.uniform(-0.1, 0.1);
  t.ty = rng.uniform(-0.1, 0.1);
  return t;
}

namespace {

// Pullback grid: the warped image I_T(z) = I(T^inv(z)), so content at x moves
// to T(x) and detected keypoints should follow.
Tensor pullback_grid(const Affine2D& t, int h, int w) {
  const Affine2D inv = t.inverse();
  std::vector<double> g(static_cast<size_t>(h) * w * 2);
  for (int y = 0; y < h; ++y) {
    const double yn = h == 1 ? 0.0 : 2.0 * y / (h - 1) - 1.0;
    for (int x = 0; x < w; ++x) {
      const double xn = w == 1 ? 0.0 : 2.0 * x / (w - 1) - 1.0;
      g[(static_cast<size_t>(y) * w + x) * 2] = inv.a * xn + inv.b * yn + inv.tx;
      g[(static_cast<size_t>(y) * w + x) * 2 + 1] = inv.c * xn + inv.d * yn + inv.ty;
    }
  }
  return Tensor({h, w, 2}, std::move(g));
}

}  // namespace

// Applies an affine map to [K,2] points on the graph.
Tensor apply_affine_points(const Affine2D& t, const Tensor& points) {
  Tensor linear({2, 2}, {t.a, t.c, t.b, t.d});  // transposed for row-vector points
  Tensor offset({1, 2}, {t.tx, t.ty});
  Tensor mapped = matmul(points, linear);
  // Broadcast the offset row over K rows.
  Tensor ox = take(offset, 0, 1), oy = take(offset, 1, 1);
  const int k = points.extent(0);
  Tensor flat = reshape(mapped, {k * 2});
  std::vector<Tensor> rows;
  rows.reserve(k);
  for (int i = 0; i < k; ++i) {
    Tensor px = add(take(flat, 2 * i, 1), ox);
    Tensor py = add(take(flat, 2 * i + 1, 1), oy);
    rows.push_back(reshape(interleave2(px, py), {2}));
  }
  return reshape(concat(rows), {k, 2});
}

Tensor keypoint_consistency_penalty(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("keypoint penalty: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  return sum(abs(sub(a, b)));
}

Tensor equivariance_loss(const KeypointNet& net, Binder& bind, const Tensor& image,
                         const Tensor& depth, const KeypointSet& base, const Affine2D& t) {
  const int h = image.extent(1), w = image.extent(2);
  Tensor grid = pullback_grid(t, h, w);
  Tensor warped_image = grid_sample_bilinear(image, grid);
  Tensor warped_depth =
      reshape(grid_sample_bilinear(reshape(depth, {1, h, w}), grid), {h, w});
  KeypointSet warped_kp = detect_keypoints(net, bind, warped_image, warped_depth);
  Tensor back = apply_affine_points(t.inverse(), warped_kp.points);
  return keypoint_consistency_penalty(base.points, back);
}

double keypoint_distance_loss(const Tensor& points, double alpha) {
  if (points.rank() != 2 || points.extent(1) != 2) {
    throw ShapeError("keypoint_distance_loss: expects [K,2], got " + shape_str(points.shape()));
  }
  const int k = points.extent(0);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const double dist = std::fabs(points.at(2 * i) - points.at(2 * j)) +
                          std::fabs(points.at(2 * i + 1) - points.at(2 * j + 1));
      const double arg = dist - alpha;
      const double sign = arg > 0.0 ? 1.0 : (arg < 0.0 ? -1.0 : 0.0);
      total += 1.0 - sign;
    }
  }
  return total;
}

Tensor keypoint_distance_surrogate(const Tensor& points, double alpha) {
  if (points.rank() != 2 || points.extent(1) != 2) {
    throw ShapeError("keypoint_distance_surrogate: expects [K,2], got " +
                     shape_str(points.shape()));
  }
  const int k = points.extent(0);
  Tensor flat = reshape(points, {k * 2});
  Tensor loss = Tensor::scalar(0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      Tensor dx = abs(sub(take(flat, 2 * i, 1), take(flat, 2 * j, 1)));
      Tensor dy = abs(sub(take(flat, 2 * i + 1, 1), take(flat, 2 * j + 1, 1)));
      loss = add(loss, relu(sub(Tensor::scalar(alpha), add(dx, dy))));
    }
  }
  return loss;
}

Tensor total_loss(const LossWeights& weights, const LossParts& parts) {
  weights.validate();
  Tensor loss = scale(parts.perceptual, weights.perceptual);
  loss = add(loss, scale(parts.gan, weights.gan));
  loss = add(loss, scale(parts.equivariance, weights.equivariance));
  return add_scalar(loss,
                    weights.distance * (parts.distance_source + parts.distance_driving));
}

}  // namespace dagankit
