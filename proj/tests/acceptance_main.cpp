// Acceptance protocol: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 4 and 7 run the full desk-scale trainings and dominate
// the runtime (tens of minutes on one core).

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "dagankit/checkpoint.hpp"
#include "dagankit/config.hpp"
#include "dagankit/gradsuite.hpp"
#include "dagankit/metrics.hpp"

using namespace dagankit;

namespace {

struct Criterion {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Criterion> results;

void report(int id, bool pass, const std::string& detail) {
  results.push_back({id, pass, detail});
  std::printf("criterion %d %s: %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

// --- 1: gradient suite ------------------------------------------------------------

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteReport rep = run_gradcheck_suite(1);
  const double dt = seconds_since(t0);
  double worst = 0;
  std::string worst_name = "-";
  for (const auto& e : rep.entries) {
    if (e.max_rel_err > worst) {
      worst = e.max_rel_err;
      worst_name = e.name;
    }
  }
  const bool pass = rep.all_pass && dt < 120.0;
  report(1, pass,
         fmt("gradient suite: %zu checks, worst rel err %.2e (%s), %.1f s", rep.entries.size(),
             worst, worst_name.c_str(), dt));
}

// --- 2: geometric identity -----------------------------------------------------------

void criterion_2() {
  Rng rng(2024);
  PhotometricConfig cfg;
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 16;
    std::vector<double> iv(3 * n * n), dv(n * n);
    for (double& v : iv) v = rng.uniform(0.0, 1.0);
    for (double& v : dv) v = rng.uniform(0.5, 20.0);
    Tensor img({3, n, n}, iv);
    Tensor depth({n, n}, dv);
    Intrinsics k{rng.uniform(30, 120), rng.uniform(30, 120), rng.uniform(2, 13),
                 rng.uniform(2, 13)};
    auto repro = reproject(depth, CameraTensors::constant(k, RelativePose::identity()));
    auto synth = synthesize_view(img, repro);
    worst = std::max(worst, photometric_error(img, synth.image, cfg, &synth.valid).item());
  }
  report(2, worst < 1e-10, fmt("identity-pose round trip: worst Pe %.2e over 20 draws", worst));
}

// --- 3: ground-truth round trip ----------------------------------------------------

void criterion_3() {
  const auto t0 = std::chrono::steady_clock::now();
  DepthSceneParams params;
  PhotometricConfig cfg;
  double worst = 0;
  int failures = 0;
  for (unsigned seed = 0; seed < 50; ++seed) {
    DepthPair pair = gen_depth_pair(52000 + seed, params);
    auto repro = reproject(pair.target_depth, CameraTensors::constant(pair.intrinsics, pair.pose));
    auto synth = synthesize_view(pair.source, repro);
    const double pe = photometric_error(pair.target, synth.image, cfg, &synth.valid).item();
    worst = std::max(worst, pe);
    if (pe >= 0.01) ++failures;
  }
  const double dt = seconds_since(t0);
  report(3, failures == 0 && dt < 60.0,
         fmt("true-geometry warp on 50 pairs: worst Pe %.4f, %d over threshold, %.1f s", worst,
             failures, dt));
}

// --- 4: depth recovery (also feeds criterion 7 with the frozen net) -----------------

RunConfig acceptance_config() {
  RunConfig cfg;
  cfg.seed = 7;
  return cfg;
}

void criterion_4(DepthModel& model) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = acceptance_config();
  DepthTrainConfig dc = cfg.depth_config();
  train_depth(model, dc);
  const double train_dt = seconds_since(t0);
  DepthEvalResult eval = evaluate_depth(model.depth, 987654, 20, dc.scene);
  const bool pass = eval.spearman > 0.7 && train_dt < 1800.0;
  report(4, pass,
         fmt("depth recovery: Spearman %.3f over pooled foreground pixels of %d held-out frames "
             "(per-frame mean %.3f, abs rel %.3f), train %.0f s",
             eval.spearman, eval.frames, eval.spearman_per_frame, eval.abs_rel_mean, train_dt));
}

// --- 5: loss unit values ---------------------------------------------------------------

void criterion_5() {
  bool pass = true;
  std::string detail;

  // Equivariance: a detector off by 0.1 in both coordinates on 15 keypoints.
  Rng rng(55);
  std::vector<double> pv(30);
  for (double& v : pv) v = rng.uniform(-0.7, 0.7);
  std::vector<double> off = pv;
  for (double& v : off) v += 0.1;
  const double le = keypoint_consistency_penalty(Tensor({15, 2}, pv), Tensor({15, 2}, off)).item();
  pass = pass && std::fabs(le - 3.0) < 1e-12;

  // Distance counter: 0 / 4 / 2 with alpha = 0.2 and sign(0) = 0.
  const double d0 = keypoint_distance_loss(Tensor({3, 2}, {-0.5, -0.5, 0.5, 0.5, -0.5, 0.5}), 0.2);
  const double d4 =
      keypoint_distance_loss(Tensor({3, 2}, {0.1, 0.1, 0.1, 0.1, 0.9, -0.9}), 0.2);
  const double d2 =
      keypoint_distance_loss(Tensor({3, 2}, {0.0, 0.0, 0.1, 0.1, 0.9, -0.9}), 0.2);
  pass = pass && d0 == 0.0 && d4 == 4.0 && d2 == 2.0;

  // Eq.-10 composition against hand arithmetic at the published weights.
  LossWeights w;
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    LossParts parts;
    const double lp = rng.uniform(0, 2), lg = rng.uniform(0, 2), leq = rng.uniform(0, 2);
    const double ds = rng.uniform_int(4), dd = rng.uniform_int(4);
    parts.perceptual = Tensor::scalar(lp);
    parts.gan = Tensor::scalar(lg);
    parts.equivariance = Tensor::scalar(leq);
    parts.distance_source = ds;
    parts.distance_driving = dd;
    const double hand = 10 * lp + lg + 10 * leq + 10 * (ds + dd);
    worst = std::max(worst, std::fabs(total_loss(w, parts).item() - hand));
  }
  pass = pass && worst < 1e-12;

  report(5, pass,
         fmt("loss units: equivariance %.12f, distance {%g,%g,%g}, composition err %.1e", le, d0,
             d4, d2, worst));
}

// --- 6: motion-field and attention fixpoints ------------------------------------------

void criterion_6() {
  bool pass = true;
  NetSizes sizes;
  Rng rng(66);

  // Zero offsets reproduce the identity grid bit for bit.
  MotionFieldConfig mf;
  std::vector<double> kpv(sizes.keypoints * 2);
  for (double& v : kpv) v = rng.uniform(-0.9, 0.9);
  Tensor kp({sizes.keypoints, 2}, kpv);
  Tensor field = build_motion_field(Tensor::zeros({sizes.keypoints, 2}), kp, 16, 16, mf);
  Tensor z = identity_grid(16, 16);
  for (int i = 0; i < field.count(); ++i) pass = pass && field.at(i) == z.at(i);

  // Unit masks + identity field hand back the encoder features exactly.
  FeatureEncoder enc("enc_i", 3, sizes, Rng(7));
  std::vector<double> iv(3 * 64 * 64);
  for (double& v : iv) v = rng.uniform(0, 1);
  Tensor img({3, 64, 64}, iv);
  Binder eval(nullptr);
  MotionBundle bundle;
  bundle.field = identity_grid(16, 16);
  bundle.motion_mask = Tensor::full({1, 16, 16}, 1.0);
  bundle.occlusion_map = Tensor::full({1, 16, 16}, 1.0);
  Tensor f_w = warp_features(enc, eval, img, bundle);
  Tensor direct = enc.forward(eval, img);
  for (int i = 0; i < f_w.count(); ++i) pass = pass && f_w.at(i) == direct.at(i);

  // Attention rows form a probability simplex; F_g stays in the value hull.
  AttentionParams params(sizes, Rng(8));
  FeatureEncoder enc_d("enc_d", 1, sizes, Rng(9));
  std::vector<double> dv(64 * 64);
  for (double& v : dv) v = rng.uniform(0, 1);
  Tensor f_d = enc_d.forward(eval, Tensor({1, 64, 64}, dv));
  AttentionOutput att = cross_attention(params, eval, f_d, f_w);
  const int n = 256;
  for (int r = 0; r < n && pass; ++r) {
    double s = 0;
    for (int c = 0; c < n; ++c) {
      pass = pass && att.attention.at(r * n + c) >= 0.0;
      s += att.attention.at(r * n + c);
    }
    pass = pass && std::fabs(s - 1.0) < 1e-5;
  }
  Tensor v = params.value(eval, f_w);
  for (int c = 0; c < sizes.warp_c && pass; ++c) {
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < n; ++i) {
      lo = std::min(lo, v.at(c * n + i));
      hi = std::max(hi, v.at(c * n + i));
    }
    for (int i = 0; i < n; ++i) {
      pass = pass && att.refined.at(c * n + i) >= lo - 1e-12 &&
             att.refined.at(c * n + i) <= hi + 1e-12;
    }
  }
  report(6, pass, "motion-field fixpoints, attention simplex and convex hull");
}

// --- 7 & 8: end-to-end toy reenactment over a frozen depth net -----------------------

void criteria_7_8(const DepthModel& depth_model) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = acceptance_config();
  GanTrainConfig gc = cfg.gan_config();

  const std::uint64_t depth_sum = depth_model.depth.params().checksum();
  GanModel model(cfg.net_sizes(), cfg.seed);
  std::vector<double> lp_curve;
  train_gan(model, depth_model.depth, gc, [&](const GanStepRecord& r) {
    lp_curve.push_back(r.perceptual);
    if (r.step % 500 == 0) {
      std::printf("  gan step %d L_P %.4f total %.4f\n", r.step, r.perceptual, r.total);
      std::fflush(stdout);
    }
  });
  const double train_dt = seconds_since(t0);

  // (a) smoothed perceptual loss falls by >= 30% from its step-100 value.
  auto smoothed = [&](int center) {
    const int lo = std::max(0, center - 50);
    const int hi = std::min<int>(lp_curve.size(), center + 50);
    double s = 0;
    for (int i = lo; i < hi; ++i) s += lp_curve[i];
    return s / (hi - lo);
  };
  const double lp_early = smoothed(100);
  const double lp_late = smoothed(static_cast<int>(lp_curve.size()) - 51);
  const bool pass_a = lp_late <= 0.7 * lp_early;

  // (b) held-out self-reenactment.
  PuppetParams pp = gc.puppet;
  pp.width = pp.height = cfg.resolution;
  PuppetSequence held = gen_puppet_sequence(991000, 8, pp);
  SelfReenactEval self = eval_self_reenactment(model.generator, depth_model.depth, held);
  const bool pass_b = self.psnr >= 20.0 && self.psnr >= self.baseline_psnr + 2.0;

  // (c) cross-sequence reenactment moves parts toward the driving anchors.
  PuppetSequence src_seq = gen_puppet_sequence(991010, 4, pp);
  PuppetSequence drv_seq = gen_puppet_sequence(991020, 8, pp);
  CrossReenactEval cross =
      eval_cross_reenactment(model.generator, depth_model.depth, src_seq, drv_seq);
  const bool pass_c = cross.ratio() <= 0.6;

  const bool pass_time = train_dt < 7200.0;
  report(7, pass_a && pass_b && pass_c && pass_time,
         fmt("toy reenactment: L_P %.4f->%.4f (x%.2f), self PSNR %.1f dB vs baseline %.1f dB, "
             "cross ratio %.3f, train %.0f s",
             lp_early, lp_late, lp_late / lp_early, self.psnr, self.baseline_psnr, cross.ratio(),
             train_dt));

  report(8, depth_model.depth.params().checksum() == depth_sum,
         fmt("frozen-depth contract: checksum %016llx unchanged",
             static_cast<unsigned long long>(depth_sum)));
}

// --- 9: determinism and persistence ---------------------------------------------------

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void criterion_9() {
  bool pass = true;
  std::string note;

  auto run_short = [](const std::string& path) {
    RunConfig cfg = acceptance_config();
    cfg.depth_steps = 25;
    cfg.depth_scenes = 3;
    cfg.depth_frames = 3;
    DepthModel model(cfg.net_sizes(), cfg.seed);
    train_depth(model, cfg.depth_config());
    save_checkpoint(path, {&model.depth.params(), &model.pose.params()},
                    CheckpointMeta{cfg.seed, config_hash(cfg), 25});
  };
  run_short("/tmp/dagankit_acc_a.ckpt");
  run_short("/tmp/dagankit_acc_b.ckpt");
  const auto bytes_a = slurp("/tmp/dagankit_acc_a.ckpt");
  const auto bytes_b = slurp("/tmp/dagankit_acc_b.ckpt");
  if (bytes_a.empty() || bytes_a != bytes_b) {
    pass = false;
    note += "repeat runs diverged; ";
  }

  // Round trip is a fixpoint after the first save.
  {
    RunConfig cfg = acceptance_config();
    DepthModel model(cfg.net_sizes(), cfg.seed);
    apply_checkpoint(load_checkpoint("/tmp/dagankit_acc_a.ckpt"),
                     {&model.depth.params(), &model.pose.params()});
    save_checkpoint("/tmp/dagankit_acc_c.ckpt", {&model.depth.params(), &model.pose.params()},
                    CheckpointMeta{cfg.seed, config_hash(cfg), 25});
    if (slurp("/tmp/dagankit_acc_c.ckpt") != bytes_a) {
      pass = false;
      note += "round trip not a fixpoint; ";
    }
  }

  // Corruption is caught by the CRC.
  {
    auto bad = bytes_a;
    bad[bad.size() / 3] ^= 0x10;
    std::ofstream f("/tmp/dagankit_acc_d.ckpt", std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bad.data()), static_cast<std::streamsize>(bad.size()));
    f.close();
    bool threw = false;
    try {
      load_checkpoint("/tmp/dagankit_acc_d.ckpt");
    } catch (const CheckpointError&) {
      threw = true;
    }
    if (!threw) {
      pass = false;
      note += "corrupted checkpoint accepted; ";
    }
  }
  report(9, pass, note.empty() ? "determinism and persistence: bitwise repeat, f32 fixpoint, "
                                 "CRC rejection"
                               : note);
}

}  // namespace

int main() {
  std::printf("dagankit acceptance suite\n");
  criterion_1();
  criterion_2();
  criterion_3();

  RunConfig cfg = acceptance_config();
  DepthModel depth_model(cfg.net_sizes(), cfg.seed);
  criterion_4(depth_model);
  criterion_5();
  criterion_6();
  criteria_7_8(depth_model);
  criterion_9();

  int passed = 0;
  for (const auto& c : results) passed += c.pass ? 1 : 0;
  std::printf("ACCEPTANCE: %d/%zu criteria passed\n", passed, results.size());
  return passed == static_cast<int>(results.size()) ? 0 : 1;
}
