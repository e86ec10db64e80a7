#include "dagankit/gradsuite.hpp"

#include <cmath>

#include "dagankit/attention.hpp"
#include "dagankit/depth_pipeline.hpp"
#include "dagankit/motion.hpp"
#include "dagankit/photometric.hpp"
#include "dagankit/rng.hpp"

namespace dagankit {

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(shape_count(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

struct PrimitiveCase {
  const char* name;
  int inputs;
  double lo, hi;
  Shape shape;
  ScalarFn fn;
};

std::vector<PrimitiveCase> primitive_cases() {
  auto probe = [](Rng seed_rng, Shape shape) {
    std::vector<double> v(shape_count(shape));
    for (double& x : v) x = seed_rng.uniform(-1, 1);
    return Tensor(shape, v);
  };
  (void)probe;
  std::vector<PrimitiveCase> cases;
  auto s = [](std::initializer_list<int> dims) { return Shape(dims); };

  cases.push_back({"add", 2, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(add(x[0], x[1]), add(x[0], x[1])));
                   }});
  cases.push_back({"sub", 2, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(sub(x[0], x[1]), x[1]));
                   }});
  cases.push_back({"mul", 2, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(x[0], x[1]));
                   }});
  cases.push_back({"div", 2, 0.5, 2, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(div(x[0], x[1]));
                   }});
  cases.push_back({"neg", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(neg(x[0]), x[0]));
                   }});
  cases.push_back({"abs", 1, 0.2, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(abs(x[0]));
                   }});
  cases.push_back({"relu", 1, 0.2, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(relu(x[0]));
                   }});
  cases.push_back({"leaky_relu", 1, 0.2, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(leaky_relu(neg(x[0]), 0.2));
                   }});
  cases.push_back({"sigmoid", 1, -2, 2, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(sigmoid(x[0]));
                   }});
  cases.push_back({"softplus", 1, -2, 2, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(softplus(x[0]));
                   }});
  cases.push_back({"exp", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(exp(x[0]));
                   }});
  cases.push_back({"log", 1, 0.5, 2, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(log(x[0]));
                   }});
  cases.push_back({"sqrt", 1, 0.5, 2, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(sqrt(x[0]));
                   }});
  cases.push_back({"sin", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(sin(x[0]));
                   }});
  cases.push_back({"cos", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(cos(x[0]));
                   }});
  cases.push_back({"scale", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(scale(x[0], -1.7));
                   }});
  cases.push_back({"add_scalar", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(add_scalar(x[0], 0.4), x[0]));
                   }});
  cases.push_back({"matmul", 2, -1, 1, s({3, 3}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(matmul(x[0], x[1]));
                   }});
  cases.push_back({"transpose", 1, -1, 1, s({3, 4}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(transpose(x[0]), transpose(x[0])));
                   }});
  cases.push_back({"reshape", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(reshape(x[0], {2, 3}), reshape(x[0], {2, 3})));
                   }});
  cases.push_back({"conv2d", 2, -1, 1, s({0}), [](Tape&, const std::vector<Tensor>& x) {
                     return mean(conv2d(x[0], x[1], 2, 1));
                   }});
  cases.push_back({"bias_add", 2, -1, 1, s({0}), [](Tape&, const std::vector<Tensor>& x) {
                     return mean(mul(bias_add(x[0], x[1]), bias_add(x[0], x[1])));
                   }});
  cases.push_back({"box_filter", 1, -1, 1, s({1, 5, 5}), [](Tape&, const std::vector<Tensor>& x) {
                     return mean(mul(box_filter(x[0], 3), box_filter(x[0], 3)));
                   }});
  cases.push_back({"concat", 2, -1, 1, s({4}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(concat({x[0], x[1]}), concat({x[1], x[0]})));
                   }});
  cases.push_back({"take", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(take(x[0], 1, 3), take(x[0], 2, 3)));
                   }});
  cases.push_back({"crop", 1, -1, 1, s({2, 4, 4}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(crop(x[0], 1, 1, 2, 2), crop(x[0], 0, 0, 2, 2)));
                   }});
  cases.push_back({"tile_channels", 1, -1, 1, s({1, 3, 3}),
                   [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(tile_channels(x[0], 3), tile_channels(x[0], 3)));
                   }});
  cases.push_back({"interleave2", 2, -1, 1, s({4}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(interleave2(x[0], x[1]), interleave2(x[1], x[0])));
                   }});
  cases.push_back({"stack_scalars", 1, -1, 1, s({4}), [](Tape&, const std::vector<Tensor>& x) {
                     std::vector<Tensor> parts;
                     for (int i = 0; i < 4; ++i) parts.push_back(take(x[0], i, 1));
                     Tensor m = stack_scalars(parts, {2, 2});
                     return sum(matmul(m, m));
                   }});
  cases.push_back({"softmax", 2, -1, 1, s({8}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(softmax(x[0], 0), x[1]));
                   }});
  cases.push_back({"grid_sample", 2, 0, 1, s({0}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(grid_sample_bilinear(x[0], x[1]));
                   }});
  cases.push_back({"resample", 1, -1, 1, s({1, 4, 4}), [](Tape&, const std::vector<Tensor>& x) {
                     Tensor down = resample(x[0], 2, ResampleMode::AveragePoolDown);
                     Tensor up = resample(down, 2, ResampleMode::BilinearUp);
                     return mean(mul(up, up));
                   }});
  cases.push_back({"sum", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(x[0], x[0]));
                   }});
  cases.push_back({"mean", 1, -1, 1, s({6}), [](Tape&, const std::vector<Tensor>& x) {
                     return mean(mul(x[0], x[0]));
                   }});
  cases.push_back({"spatial_mean", 1, -1, 1, s({2, 3, 3}),
                   [](Tape&, const std::vector<Tensor>& x) {
                     return sum(mul(spatial_mean(x[0]), spatial_mean(x[0])));
                   }});
  return cases;
}

GradSuiteEntry run_primitive(const PrimitiveCase& c, Rng& rng) {
  GradSuiteEntry entry;
  entry.name = c.name;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> inputs;
    if (std::string(c.name) == "conv2d" || std::string(c.name) == "bias_add") {
      inputs.push_back(rand_tensor(rng, {1, 2, 5, 5}, c.lo, c.hi));
      inputs.push_back(std::string(c.name) == "conv2d"
                           ? rand_tensor(rng, {2, 2, 3, 3}, c.lo, c.hi)
                           : rand_tensor(rng, {2}, c.lo, c.hi));
      if (std::string(c.name) == "bias_add") inputs[0] = rand_tensor(rng, {2, 4, 4}, c.lo, c.hi);
    } else if (std::string(c.name) == "grid_sample") {
      inputs.push_back(rand_tensor(rng, {2, 5, 5}, 0, 1));
      // Coordinates kept away from the bilinear cell boundaries.
      std::vector<double> cv(8);
      for (double& v : cv) {
        v = rng.uniform(-0.85, 0.85);
        const double px = (v + 1.0) * 2.0;  // pixel units on a 5-wide axis
        if (std::fabs(px - std::round(px)) < 0.05) v += 0.07;
      }
      inputs.push_back(Tensor({2, 2, 2}, cv));
    } else {
      for (int i = 0; i < c.inputs; ++i) inputs.push_back(rand_tensor(rng, c.shape, c.lo, c.hi));
    }
    GradReport rep = finite_diff_check(c.name, c.fn, inputs, 1e-5);
    entry.max_rel_err = std::max(entry.max_rel_err, rep.max_rel_err);
  }
  entry.pass = entry.max_rel_err < entry.tolerance;
  return entry;
}

// Composite 1: Eq. 5 through Eqs. 3-4 (pose raw heads, intrinsics, depth).
GradSuiteEntry composite_pe_reproject(Rng& rng) {
  GradSuiteEntry entry;
  entry.name = "composite/pe_through_reproject";
  const int n = 8;
  PhotometricConfig cfg;
  for (int attempt = 0; attempt < 80; ++attempt) {
    Tensor target = rand_tensor(rng, {3, n, n}, 0.1, 0.9);
    Tensor source = rand_tensor(rng, {3, n, n}, 0.1, 0.9);
    Tensor depth = rand_tensor(rng, {n, n}, 1.2, 2.8);
    Tensor rot = rand_tensor(rng, {3}, -1, 1);
    Tensor trans = rand_tensor(rng, {3}, -1.5, 1.5);
    Tensor intr = rand_tensor(rng, {4}, -0.3, 0.3);

    auto fn = [&](Tape&, const std::vector<Tensor>& xs) {
      CameraTensors cam = decode_pose(PoseRaw{xs[0], xs[1], xs[2]}, n, n);
      auto repro = reproject(xs[3], cam);
      auto synth = synthesize_view(source, repro);
      return photometric_error(target, synth.image, cfg, &synth.valid);
    };

    bool clean = true;
    {
      CameraTensors cam = decode_pose(PoseRaw{rot, trans, intr}, n, n);
      auto repro = reproject(depth, cam);
      auto synth = synthesize_view(source, repro);
      for (int i = 0; i < n * n && clean; ++i) {
        for (int d = 0; d < 2; ++d) {
          const double c = repro.coords_pixel.at(i * 2 + d);
          if (std::fabs(c - std::round(c)) < 1e-3) clean = false;
        }
      }
      for (int i = 0; i < 3 * n * n && clean; ++i) {
        if (std::fabs(target.at(i) - synth.image.at(i)) < 1e-3) clean = false;
      }
    }
    if (!clean) continue;
    GradReport rep = finite_diff_check(entry.name, fn, {rot, trans, intr, depth}, 1e-5);
    entry.max_rel_err = rep.max_rel_err;
    entry.pass = rep.max_rel_err < entry.tolerance;
    return entry;
  }
  entry.pass = false;
  entry.max_rel_err = std::nan("");
  return entry;
}

// Composite 2: F_w through the motion bundle (keypoints and offsets).
GradSuiteEntry composite_warp_bundle(Rng& rng) {
  GradSuiteEntry entry;
  entry.name = "composite/fw_through_motion_bundle";
  NetSizes tiny;
  tiny.warp_c1 = 4;
  tiny.warp_c = 6;
  tiny.occl_c = 4;
  tiny.keypoints = 4;
  FeatureEncoder enc("enc_i", 3, tiny, Rng(rng.next_u64()));
  OcclusionNet occl(tiny, Rng(rng.next_u64()));
  {  // zero heads carry no field gradient; give them weights
    Rng wr(rng.next_u64());
    for (double& v : occl.params().at("head_m.w").value) v = 0.05 * wr.normal();
    for (double& v : occl.params().at("head_o.w").value) v = 0.05 * wr.normal();
  }
  MotionFieldConfig mf;
  mf.sigma = 0.35;  // wide splats so every grid cell sees a gradient

  for (int attempt = 0; attempt < 80; ++attempt) {
    Tensor src = rand_tensor(rng, {3, 16, 16}, 0.05, 0.95);
    Tensor kp_src = rand_tensor(rng, {4, 2}, -0.6, 0.6);
    Tensor kp_drv = rand_tensor(rng, {4, 2}, -0.6, 0.6);

    auto fn = [&](Tape& tape, const std::vector<Tensor>& xs) {
      Binder bind(&tape);
      Tensor offsets = sub(xs[0], xs[1]);
      MotionBundle bundle;
      bundle.field = build_motion_field(offsets, xs[1], 4, 4, mf);
      OcclusionMasks masks = occlusion_forward(occl, bind, src, bundle.field);
      bundle.motion_mask = masks.motion_mask;
      bundle.occlusion_map = masks.occlusion_map;
      Tensor f_w = warp_features(enc, bind, src, bundle);
      return mean(mul(f_w, f_w));
    };

    bool clean = true;
    {
      Tensor offsets = sub(kp_src, kp_drv);
      Tensor field = build_motion_field(offsets, kp_drv, 4, 4, mf);
      for (int i = 0; i < field.count() && clean; ++i) {
        const double px = (field.at(i) + 1.0) * 0.5 * 3;  // 4-wide axis
        if (std::fabs(px - std::round(px)) < 2e-3) clean = false;
      }
    }
    if (!clean) continue;
    GradReport rep = finite_diff_check(entry.name, fn, {kp_src, kp_drv}, 1e-5);
    entry.max_rel_err = rep.max_rel_err;
    entry.pass = rep.max_rel_err < entry.tolerance;
    return entry;
  }
  entry.pass = false;
  entry.max_rel_err = std::nan("");
  return entry;
}

// Composite 3: F_g through cross-modal attention (Eq. 9 pipeline).
GradSuiteEntry composite_attention(Rng& rng) {
  GradSuiteEntry entry;
  entry.name = "composite/fg_through_attention";
  NetSizes tiny;
  tiny.warp_c = 6;
  tiny.attn_ca = 3;
  AttentionParams params(tiny, Rng(rng.next_u64()));
  Tensor probe = rand_tensor(rng, {6, 4, 4}, -1, 1);
  Binder frozen(nullptr);
  auto fn = [&](Tape&, const std::vector<Tensor>& xs) {
    AttentionOutput out = cross_attention(params, frozen, xs[0], xs[1]);
    return sum(mul(out.refined, probe));
  };
  // No kinks along this path (softmax and matmuls are smooth).
  Tensor f_d = rand_tensor(rng, {6, 4, 4}, -1, 1);
  Tensor f_w = rand_tensor(rng, {6, 4, 4}, -1, 1);
  GradReport rep = finite_diff_check(entry.name, fn, {f_d, f_w}, 1e-5);
  entry.max_rel_err = rep.max_rel_err;
  entry.pass = rep.max_rel_err < entry.tolerance;
  return entry;
}

}  // namespace

GradSuiteReport run_gradcheck_suite(std::uint64_t seed) {
  Rng rng(seed ^ 0x6a5d390ull);
  GradSuiteReport report;
  for (const PrimitiveCase& c : primitive_cases()) {
    report.entries.push_back(run_primitive(c, rng));
  }
  report.entries.push_back(composite_pe_reproject(rng));
  report.entries.push_back(composite_warp_bundle(rng));
  report.entries.push_back(composite_attention(rng));
  report.all_pass = true;
  for (const GradSuiteEntry& e : report.entries) report.all_pass = report.all_pass && e.pass;
  return report;
}

}  // namespace dagankit
