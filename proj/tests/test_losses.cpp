#include <doctest.h>

#include <cmath>

#include <set>

#include "dagankit/gan_pipeline.hpp"

using namespace dagankit;

namespace {

Tensor random_image(Rng& rng, int c, int h, int w) {
  std::vector<double> v(c * h * w);
  for (double& x : v) x = rng.uniform(0.05, 0.95);
  return Tensor({c, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("perceptual loss: identity, symmetry, sensitivity, size guard") {
  NetSizes sizes;
  FeatureExtractor ex(sizes, 99);
  Rng rng(3);
  Tensor img = random_image(rng, 3, 32, 32);
  CHECK(perceptual_loss(ex, img, img).item() == 0.0);

  Tensor other = random_image(rng, 3, 32, 32);
  CHECK(perceptual_loss(ex, img, other).item() == perceptual_loss(ex, other, img).item());

  // A pair differing in one block registers as strictly positive.
  std::vector<double> bumped = img.values();
  for (int y = 8; y < 16; ++y)
    for (int x = 8; x < 16; ++x) bumped[y * 32 + x] = std::min(1.0, bumped[y * 32 + x] + 0.3);
  CHECK(perceptual_loss(ex, img, Tensor(img.shape(), bumped)).item() > 1e-6);

  CHECK_THROWS_AS(perceptual_loss(ex, random_image(rng, 3, 8, 8), random_image(rng, 3, 8, 8)),
                  ShapeError);
}

TEST_CASE("extractor parameters are frozen and seed-reproducible") {
  NetSizes sizes;
  FeatureExtractor a(sizes, 5), b(sizes, 5), c(sizes, 6);
  CHECK(a.params().checksum() == b.params().checksum());
  CHECK(a.params().checksum() != c.params().checksum());
}

TEST_CASE("lsgan arithmetic endpoints") {
  // Perfect discriminator: D=1 on real, D=0 on fake.
  Tensor ones = Tensor::full({1, 2, 2}, 1.0);
  Tensor zeros = Tensor::zeros({1, 2, 2});
  CHECK(lsgan_disc_loss_from(ones, zeros).item() == 0.0);
  CHECK(lsgan_gen_loss_from(zeros).item() == 1.0);

  // Constant 0.5 output.
  Tensor half = Tensor::full({1, 2, 2}, 0.5);
  CHECK(lsgan_disc_loss_from(half, half).item() == 0.5);
  CHECK(lsgan_gen_loss_from(half).item() == 0.25);
}

TEST_CASE("feature matching vanishes when real equals fake") {
  NetSizes sizes;
  Discriminator disc(sizes, Rng(7));
  Rng rng(11);
  Tensor img = random_image(rng, 3, 64, 64);
  GanGeneratorTerms terms = lsgan_generator_terms(disc, img, img);
  CHECK(terms.feature_matching.item() == 0.0);
}

TEST_CASE("equivariance loss: identity transform costs nothing") {
  NetSizes sizes;
  KeypointNet net(sizes, Rng(13));
  Rng rng(17);
  Tensor img = random_image(rng, 3, 64, 64);
  std::vector<double> dv(64 * 64);
  for (double& v : dv) v = rng.uniform(1.0, 3.0);
  Tensor depth({64, 64}, dv);

  Binder eval(nullptr);
  KeypointSet base = detect_keypoints(net, eval, img, depth);
  Tensor loss = equivariance_loss(net, eval, img, depth, base, Affine2D::identity());
  CHECK(loss.item() < 1e-12);
}

TEST_CASE("a perfectly equivariant detector scores zero for any transform") {
  // If the detector on the warped image reports exactly T(x_k), the penalty
  // sum |x_k - T^inv(T(x_k))| vanishes up to roundoff.
  Rng rng(19);
  Affine2D t = random_equivariance_transform(rng);
  std::vector<double> pv(15 * 2);
  for (double& v : pv) v = rng.uniform(-0.8, 0.8);
  Tensor points({15, 2}, pv);
  Tensor mapped = apply_affine_points(t, points);
  Tensor back = apply_affine_points(t.inverse(), mapped);
  CHECK(keypoint_consistency_penalty(points, back).item() < 1e-12);
}

TEST_CASE("a detector off by 0.1 in both coordinates scores 15 * 0.2") {
  std::vector<double> pv(15 * 2);
  Rng rng(23);
  for (double& v : pv) v = rng.uniform(-0.7, 0.7);
  Tensor points({15, 2}, pv);
  std::vector<double> shifted = pv;
  for (double& v : shifted) v += 0.1;
  CHECK(keypoint_consistency_penalty(points, Tensor({15, 2}, shifted)).item() ==
        doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("keypoint distance loss counts crowded ordered pairs") {
  // All pairwise L1 distances above alpha: zero.
  Tensor spread({3, 2}, {-0.5, -0.5, 0.5, 0.5, -0.5, 0.5});
  CHECK(keypoint_distance_loss(spread, 0.2) == 0.0);

  // Exactly two coincident keypoints: two ordered pairs, each 1 - (-1) = 2.
  Tensor coincident({3, 2}, {0.1, 0.1, 0.1, 0.1, 0.9, -0.9});
  CHECK(keypoint_distance_loss(coincident, 0.2) == 4.0);

  // One pair at exactly alpha: sign(0) = 0, two ordered pairs of 1 each.
  Tensor at_alpha({3, 2}, {0.0, 0.0, 0.1, 0.1, 0.9, -0.9});
  CHECK(keypoint_distance_loss(at_alpha, 0.2) == 2.0);
}

TEST_CASE("keypoint distance loss is permutation invariant and zero iff spread") {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> pv(8 * 2);
    for (double& v : pv) v = rng.uniform(-1, 1);
    Tensor points({8, 2}, pv);
    const double base = keypoint_distance_loss(points, 0.2);

    std::vector<int> perm(8);
    for (int i = 0; i < 8; ++i) perm[i] = i;
    for (int i = 7; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    std::vector<double> shuffled(16);
    for (int i = 0; i < 8; ++i) {
      shuffled[2 * i] = pv[2 * perm[i]];
      shuffled[2 * i + 1] = pv[2 * perm[i] + 1];
    }
    CHECK(keypoint_distance_loss(Tensor({8, 2}, shuffled), 0.2) == base);

    bool all_spread = true;
    for (int i = 0; i < 8 && all_spread; ++i)
      for (int j = 0; j < 8; ++j) {
        if (i == j) continue;
        const double d = std::fabs(pv[2 * i] - pv[2 * j]) + std::fabs(pv[2 * i + 1] - pv[2 * j + 1]);
        if (d <= 0.2) {
          all_spread = false;
          break;
        }
      }
    CHECK((base == 0.0) == all_spread);
  }
}

TEST_CASE("the distance surrogate is differentiable and matches the counter's support") {
  // Nearly coincident: |dx|+|dy| = 0.03, two ordered pairs of (0.2 - 0.03).
  Tensor crowded({3, 2}, {0.10, 0.10, 0.12, 0.11, 0.9, -0.9});
  Tape tape;
  Tensor pts = tape.leaf(crowded);
  Tensor loss = keypoint_distance_surrogate(pts, 0.2);
  CHECK(loss.item() == doctest::Approx(0.34).epsilon(1e-12));
  auto grads = tape.backward(loss);
  double norm = 0;
  for (double g : grads[pts.node()].values()) norm += std::fabs(g);
  CHECK(norm > 0.0);

  Tensor spread({3, 2}, {-0.5, -0.5, 0.5, 0.5, -0.5, 0.5});
  CHECK(keypoint_distance_surrogate(spread, 0.2).item() == 0.0);
}

TEST_CASE("total loss composition matches hand arithmetic") {
  LossWeights w;  // (10, 1, 10, 10)
  LossParts parts;
  parts.perceptual = Tensor::scalar(0.3);
  parts.gan = Tensor::scalar(0.2);
  parts.equivariance = Tensor::scalar(0.1);
  parts.distance_source = 0.0;
  parts.distance_driving = 2.0;
  CHECK(total_loss(w, parts).item() == doctest::Approx(24.2).epsilon(1e-13));

  LossParts zeros;
  zeros.perceptual = Tensor::scalar(0.0);
  zeros.gan = Tensor::scalar(0.0);
  zeros.equivariance = Tensor::scalar(0.0);
  CHECK(total_loss(w, zeros).item() == 0.0);

  // Doubling lambda_P adds exactly lambda_P * L_P.
  LossWeights dbl = w;
  dbl.perceptual = 20.0;
  CHECK(total_loss(dbl, parts).item() ==
        doctest::Approx(total_loss(w, parts).item() + 10.0 * 0.3).epsilon(1e-12));

  // Random parts match a hand-computed weighted sum to 1e-12.
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    LossParts p;
    const double lp = rng.uniform(0, 3), lg = rng.uniform(0, 3), le = rng.uniform(0, 3);
    const double ds = rng.uniform_int(5), dd = rng.uniform_int(5);
    p.perceptual = Tensor::scalar(lp);
    p.gan = Tensor::scalar(lg);
    p.equivariance = Tensor::scalar(le);
    p.distance_source = ds;
    p.distance_driving = dd;
    const double hand = 10 * lp + 1 * lg + 10 * le + 10 * (ds + dd);
    CHECK(std::fabs(total_loss(w, p).item() - hand) < 1e-12);
  }
}

TEST_CASE("one adversarial step keeps the optimizer partition clean") {
  NetSizes sizes;
  GanModel model(sizes, 3);
  DepthNet depth(sizes, Rng(5));
  GanTrainConfig cfg;
  cfg.sequences = 1;
  cfg.frames_per_sequence = 2;
  cfg.steps = 1;
  cfg.seed = 3;

  const std::uint64_t depth_before = depth.params().checksum();
  const std::uint64_t disc_before = model.discriminator.params().checksum();
  const std::uint64_t kp_before = model.generator.keypoints.params().checksum();
  const std::uint64_t extractor_before = model.extractor.params().checksum();

  GanTrainer trainer(model, depth, cfg);
  GanStepRecord rec = trainer.step();
  CHECK(std::isfinite(rec.total));
  CHECK(std::isfinite(rec.discriminator));
  CHECK(rec.perceptual >= 0.0);

  // Frozen depth and extractor untouched; both players moved.
  CHECK(depth.params().checksum() == depth_before);
  CHECK(model.extractor.params().checksum() == extractor_before);
  CHECK(model.discriminator.params().checksum() != disc_before);
  CHECK(model.generator.keypoints.params().checksum() != kp_before);
}

TEST_CASE("discriminator and generator updates stay on their own parameters") {
  NetSizes sizes;
  GanModel model(sizes, 7);
  Rng rng(37);
  Tensor real = random_image(rng, 3, 64, 64);
  Tensor fake = random_image(rng, 3, 64, 64);

  {  // Discriminator step touches no generator parameters.
    const auto gen_before = model.generator.decoder.params().checksum();
    Tape tape;
    Binder bind(&tape);
    Tensor loss = lsgan_disc_loss(model.discriminator, bind, real, fake);
    auto grads = tape.backward(loss);
    Adam adam(AdamConfig{2e-4, 0.5, 0.999, 1e-8});
    adam.step(bind.bound(), grads);
    CHECK(model.generator.decoder.params().checksum() == gen_before);
    std::set<const Param*> disc_params;
    for (const Param& p : model.discriminator.params().entries()) disc_params.insert(&p);
    for (const auto& [param, node] : bind.bound()) {
      CHECK(disc_params.count(param) == 1);
      (void)node;
    }
  }
  {  // Generator-side terms leave the discriminator constant.
    const auto disc_before = model.discriminator.params().checksum();
    Tape tape;
    Binder bind(&tape);
    Tensor fake_var = sigmoid(bind(model.generator.decoder.params().at("head.b")));
    (void)fake_var;
    GanGeneratorTerms terms = lsgan_generator_terms(model.discriminator, real, fake);
    CHECK(terms.adversarial.item() >= 0.0);
    CHECK(model.discriminator.params().checksum() == disc_before);
  }
}
