#include "dagankit/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "dagankit/rng.hpp"

namespace dagankit {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Bilinearly interpolated random grid; C0-smooth, band-limited texture.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int n, double amp) : n_(n), grid_(static_cast<size_t>(n) * n) {
    for (double& v : grid_) v = rng.uniform(-amp, amp);
  }
  double sample(double u, double v) const {
    u = std::clamp(u, 0.0, n_ - 1.000001);
    v = std::clamp(v, 0.0, n_ - 1.000001);
    const int i = static_cast<int>(u), j = static_cast<int>(v);
    const double fu = u - i, fv = v - j;
    const double a = grid_[j * n_ + i], b = grid_[j * n_ + i + 1];
    const double c = grid_[(j + 1) * n_ + i], d = grid_[(j + 1) * n_ + i + 1];
    return (a * (1 - fu) + b * fu) * (1 - fv) + (c * (1 - fu) + d * fu) * fv;
  }

 private:
  int n_;
  std::vector<double> grid_;
};

struct Rgb {
  double r, g, b;
};

}  // namespace

// --- Depth scenes ----------------------------------------------------------------

void DepthSceneParams::validate() const {
  if (width < 8 || height < 8) throw ShapeError("depth scene: image too small");
  if (frames < 2) throw ShapeError("depth scene: needs at least 2 frames");
  if (fg_depth_max >= bg_depth_min) {
    throw ShapeError("depth scene: foreground depth must stay in front of the background");
  }
  if (fg_depth_min <= 0.0) throw ShapeError("depth scene: non-positive depth");
}

DepthScene gen_depth_scene(std::uint64_t seed, const DepthSceneParams& p) {
  p.validate();
  Rng rng(seed ^ 0x5ce4e5a1d3c1b2ull);

  DepthScene scene;
  scene.intrinsics.fx = rng.uniform(1.1, 1.5) * p.width;
  scene.intrinsics.fy = scene.intrinsics.fx * rng.uniform(0.97, 1.03);
  scene.intrinsics.cx = p.width / 2.0 + rng.uniform(-1.5, 1.5);
  scene.intrinsics.cy = p.height / 2.0 + rng.uniform(-1.5, 1.5);
  scene.intrinsics.validate(p.width, p.height);

  // Foreground plane: center point, tilted normal, finite rectangular extent.
  const double fg_depth = rng.uniform(p.fg_depth_min, p.fg_depth_max);
  const double bg_depth = rng.uniform(p.bg_depth_min, p.bg_depth_max);
  const Vec3 fg_center{rng.uniform(-0.08, 0.08) * fg_depth, rng.uniform(-0.08, 0.08) * fg_depth,
                       fg_depth};
  const double tilt = rng.uniform(0.8, 1.0) * p.max_tilt_deg * 3.14159265358979 / 180.0;
  const double tilt_dir = rng.uniform(0.0, 2.0 * 3.14159265358979);
  const Vec3 tilt_axis{std::cos(tilt_dir), std::sin(tilt_dir), 0.0};
  const Mat3 tilt_rot = Mat3::rodrigues(tilt_axis * tilt);
  const Vec3 fg_normal = tilt_rot.apply({0, 0, -1});
  const Vec3 fg_e1 = tilt_rot.apply({1, 0, 0});
  const Vec3 fg_e2 = tilt_rot.apply({0, 1, 0});

  const double footprint = fg_depth * p.width / scene.intrinsics.fx;
  const double ex = rng.uniform(0.34, 0.46) * footprint;
  const double ey = rng.uniform(0.34, 0.46) * footprint;

  // Shared palette with moderate fg/bg contrast keeps disocclusion residuals low.
  const Rgb base{rng.uniform(0.38, 0.55), rng.uniform(0.38, 0.55), rng.uniform(0.38, 0.55)};
  const double fg_shift = rng.uniform(0.04, 0.08) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  ValueNoise fg_tex[3] = {ValueNoise(rng, 24, 0.12), ValueNoise(rng, 24, 0.12),
                          ValueNoise(rng, 24, 0.12)};
  ValueNoise bg_tex[3] = {ValueNoise(rng, 24, 0.10), ValueNoise(rng, 24, 0.10),
                          ValueNoise(rng, 24, 0.10)};
  const double fg_cell = rng.uniform(0.085, 0.12) * footprint;
  const double bg_cell = fg_cell * bg_depth / fg_depth;

  // Camera trajectory: smooth walk (per-clip base velocity plus small
  // jitter), like consecutive frames of handheld video.
  std::vector<Mat3> cam_rot(p.frames);
  std::vector<Vec3> cam_pos(p.frames);
  Vec3 w{0, 0, 0}, c{0, 0, 0};
  const double rot_step = p.max_rotation_deg * 3.14159265358979 / 180.0;
  Vec3 base_dw{rng.uniform(-rot_step, rot_step), rng.uniform(-rot_step, rot_step),
               rng.uniform(-rot_step, rot_step)};
  base_dw = base_dw * 0.8;
  Vec3 base_dc{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.4, 0.4)};
  {
    const double dn = base_dc.norm();
    if (dn > 1e-12) base_dc = base_dc * (p.translation_frac * fg_depth * 0.8 / dn);
  }
  for (int f = 0; f < p.frames; ++f) {
    cam_rot[f] = Mat3::rodrigues(w);
    cam_pos[f] = c;
    Vec3 dw = base_dw + Vec3{rng.uniform(-rot_step, rot_step), rng.uniform(-rot_step, rot_step),
                             rng.uniform(-rot_step, rot_step)} *
                            0.2;
    Vec3 dc = base_dc + Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.4, 0.4)} *
                            (0.2 * p.translation_frac * fg_depth);
    w = w + dw;
    c = c + dc;
  }

  // Near its boundary the foreground texture fades into the background field
  // sampled along the same ray; pixels disoccluded by parallax then reveal
  // nearly the color that covered them, keeping pairs photometrically
  // consistent up to the bilinear resampling residual.
  const double fade_width = 0.09 * footprint;

  const Intrinsics& k = scene.intrinsics;
  for (int f = 0; f < p.frames; ++f) {
    DepthFrame frame;
    std::vector<double> img(static_cast<size_t>(3) * p.height * p.width);
    std::vector<double> dep(static_cast<size_t>(p.height) * p.width);
    frame.foreground.assign(static_cast<size_t>(p.height) * p.width, 0);

    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        const Vec3 dir_cam{(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0};
        const Vec3 dir = cam_rot[f].apply(dir_cam);
        const Vec3& origin = cam_pos[f];

        // Foreground rectangle.
        double t_fg = -1.0;
        double a1 = 0, a2 = 0;
        const double denom = fg_normal.dot(dir);
        if (std::fabs(denom) > 1e-12) {
          const double t = fg_normal.dot(fg_center - origin) / denom;
          if (t > 0.0) {
            const Vec3 hit = origin + dir * t - fg_center;
            a1 = hit.dot(fg_e1);
            a2 = hit.dot(fg_e2);
            if (std::fabs(a1) <= ex && std::fabs(a2) <= ey) t_fg = t;
          }
        }
        // Background plane z = bg_depth.
        double t_bg = -1.0;
        if (std::fabs(dir.z) > 1e-12) {
          const double t = (bg_depth - origin.z) / dir.z;
          if (t > 0.0) t_bg = t;
        }

        Rgb bg_color{0.5, 0.5, 0.5};
        if (t_bg > 0.0) {
          const Vec3 hit = origin + dir * t_bg;
          const double u = hit.x / bg_cell + 12.0, v = hit.y / bg_cell + 12.0;
          bg_color = {clamp01(base.r - fg_shift + bg_tex[0].sample(u, v)),
                      clamp01(base.g - fg_shift + bg_tex[1].sample(u, v)),
                      clamp01(base.b - fg_shift + bg_tex[2].sample(u, v))};
        }

        Rgb color;
        double depth;
        const int idx = y * p.width + x;
        if (t_fg > 0.0 && (t_bg < 0.0 || t_fg < t_bg)) {
          const double u = a1 / fg_cell + 12.0, v = a2 / fg_cell + 12.0;
          const Rgb fg_color{clamp01(base.r + fg_shift + fg_tex[0].sample(u, v)),
                             clamp01(base.g + fg_shift + fg_tex[1].sample(u, v)),
                             clamp01(base.b + fg_shift + fg_tex[2].sample(u, v))};
          const double edge_dist = std::min(ex - std::fabs(a1), ey - std::fabs(a2));
          const double fade = std::clamp(edge_dist / fade_width, 0.0, 1.0);
          color = {bg_color.r + (fg_color.r - bg_color.r) * fade,
                   bg_color.g + (fg_color.g - bg_color.g) * fade,
                   bg_color.b + (fg_color.b - bg_color.b) * fade};
          depth = t_fg;
          frame.foreground[idx] = 1;
        } else {
          color = bg_color;
          depth = t_bg;
        }
        img[idx] = color.r;
        img[p.height * p.width + idx] = color.g;
        img[2 * p.height * p.width + idx] = color.b;
        dep[idx] = depth;
      }
    }
    frame.image = Tensor({3, p.height, p.width}, std::move(img));
    frame.depth = Tensor({p.height, p.width}, std::move(dep));
    scene.frames.push_back(std::move(frame));
  }

  for (int f = 0; f + 1 < p.frames; ++f) {
    // x_src = Rs^T Rt x_tgt + Rs^T (Ct - Cs), target = frame f, source = f+1.
    const Mat3 rs_t = cam_rot[f + 1].transposed();
    const Mat3 rel = rs_t.mul(cam_rot[f]);
    const Vec3 t = rs_t.apply(cam_pos[f] - cam_pos[f + 1]);
    RelativePose pose;
    // Recover an axis-angle from the relative rotation (small angles here).
    const double cos_theta = std::clamp((rel.m[0] + rel.m[4] + rel.m[8] - 1.0) / 2.0, -1.0, 1.0);
    const double theta = std::acos(cos_theta);
    Vec3 axis{rel.m[7] - rel.m[5], rel.m[2] - rel.m[6], rel.m[3] - rel.m[1]};
    const double an = axis.norm();
    if (theta > 1e-12 && an > 1e-12) {
      pose.axis_angle = axis * (theta / an);
    }
    pose.translation = t;
    scene.pair_pose.push_back(pose);
  }
  return scene;
}

DepthPair gen_depth_pair(std::uint64_t seed, const DepthSceneParams& params) {
  DepthSceneParams two = params;
  two.frames = 2;
  DepthScene scene = gen_depth_scene(seed, two);
  DepthPair pair;
  pair.target = scene.frames[0].image;
  pair.source = scene.frames[1].image;
  pair.target_depth = scene.frames[0].depth;
  pair.pose = scene.pair_pose[0];
  pair.intrinsics = scene.intrinsics;
  pair.foreground = scene.frames[0].foreground;
  return pair;
}

// --- Puppets -----------------------------------------------------------------------

void PuppetParams::validate() const {
  if (width < 16 || height < 16) throw ShapeError("puppet: image too small");
  if (walk_step < 0.0 || head_step < 0.0) throw ShapeError("puppet: negative step");
}

namespace {

struct PartSpec {
  double bx, by;  // base center, normalized
  double rx, ry;  // radii, normalized
  Rgb color;
};

// Part layout is shared across sequences so cross-sequence driving stays in
// distribution; colors carry the channel identity used by dominant_centroid.
const PartSpec kParts[kPuppetParts] = {
    {-0.32, -0.26, 0.17, 0.13, {0.88, 0.16, 0.14}},
    {0.32, -0.26, 0.17, 0.13, {0.14, 0.82, 0.16}},
    {0.0, 0.38, 0.22, 0.15, {0.16, 0.22, 0.92}},
};

double soft_inside(double dx, double dy, double rx, double ry, double edge) {
  const double r = std::sqrt((dx * dx) / (rx * rx) + (dy * dy) / (ry * ry));
  return clamp01((1.0 + edge - r) / edge);
}

}  // namespace

PuppetFrame render_puppet_frame(std::uint64_t seed, const PuppetParams& p,
                                const std::array<double, 2>& head,
                                const std::array<std::array<double, 2>, kPuppetParts>& anchors) {
  p.validate();
  Rng rng(seed ^ 0x9d2c5680u);
  ValueNoise bg_tex(rng, 20, 0.06);
  ValueNoise head_tex(rng, 20, 0.10);
  // Head and background stay channel-neutral so only the colored parts
  // register in dominant_centroid.
  const double bg_gray = rng.uniform(0.10, 0.20);
  const Rgb bg_base{bg_gray + rng.uniform(-0.02, 0.02), bg_gray + rng.uniform(-0.02, 0.02),
                    bg_gray + rng.uniform(-0.02, 0.02)};
  const double head_gray = rng.uniform(0.44, 0.58);
  const Rgb head_base{head_gray + rng.uniform(-0.02, 0.02), head_gray + rng.uniform(-0.02, 0.02),
                      head_gray + rng.uniform(-0.02, 0.02)};
  const double head_rx = 0.66 + rng.uniform(-0.04, 0.04);
  const double head_ry = 0.78 + rng.uniform(-0.04, 0.04);
  double color_jitter[kPuppetParts];
  for (double& j : color_jitter) j = rng.uniform(-0.06, 0.06);

  PuppetFrame frame;
  frame.anchors = anchors;
  const double edge = 3.0 / p.width;  // ~1.5 px anti-aliasing band
  std::vector<double> img(static_cast<size_t>(3) * p.height * p.width);
  const int hw = p.height * p.width;
  for (int y = 0; y < p.height; ++y) {
    const double yn = 2.0 * y / (p.height - 1) - 1.0;
    for (int x = 0; x < p.width; ++x) {
      const double xn = 2.0 * x / (p.width - 1) - 1.0;
      Rgb c{clamp01(bg_base.r + bg_tex.sample(x * 0.22 + 3, y * 0.22 + 3)),
            clamp01(bg_base.g + bg_tex.sample(x * 0.22 + 9, y * 0.22 + 7)),
            clamp01(bg_base.b + bg_tex.sample(x * 0.22 + 15, y * 0.22 + 11))};

      const double ah = soft_inside(xn - head[0], yn - head[1], head_rx, head_ry, edge);
      if (ah > 0.0) {
        const double tex = head_tex.sample(x * 0.30 + 2, y * 0.30 + 2);
        c.r = c.r * (1 - ah) + clamp01(head_base.r + tex) * ah;
        c.g = c.g * (1 - ah) + clamp01(head_base.g + tex) * ah;
        c.b = c.b * (1 - ah) + clamp01(head_base.b + tex) * ah;
      }
      for (int i = 0; i < kPuppetParts; ++i) {
        const double ap =
            soft_inside(xn - anchors[i][0], yn - anchors[i][1], kParts[i].rx, kParts[i].ry, edge);
        if (ap > 0.0) {
          const Rgb& pc = kParts[i].color;
          c.r = c.r * (1 - ap) + clamp01(pc.r + color_jitter[i]) * ap;
          c.g = c.g * (1 - ap) + clamp01(pc.g + color_jitter[i]) * ap;
          c.b = c.b * (1 - ap) + clamp01(pc.b + color_jitter[i]) * ap;
        }
      }
      const int idx = y * p.width + x;
      img[idx] = c.r;
      img[hw + idx] = c.g;
      img[2 * hw + idx] = c.b;
    }
  }
  frame.image = Tensor({3, p.height, p.width}, std::move(img));
  return frame;
}

PuppetSequence gen_puppet_sequence(std::uint64_t seed, int length, const PuppetParams& p) {
  p.validate();
  if (length < 2) throw ShapeError("puppet: sequence length must be >= 2");
  Rng rng(seed ^ 0x51a7b3c9u);

  // Random walks: head translation plus per-part local offsets.
  double hx = rng.uniform(-0.03, 0.03), hy = rng.uniform(-0.03, 0.03);
  double lx[kPuppetParts], ly[kPuppetParts];
  for (int i = 0; i < kPuppetParts; ++i) {
    lx[i] = rng.uniform(-0.05, 0.05);
    ly[i] = rng.uniform(-0.05, 0.05);
  }

  PuppetSequence seq;
  for (int f = 0; f < length; ++f) {
    std::array<std::array<double, 2>, kPuppetParts> anchors;
    for (int i = 0; i < kPuppetParts; ++i) {
      anchors[i] = {hx + kParts[i].bx + lx[i], hy + kParts[i].by + ly[i]};
    }
    seq.frames.push_back(render_puppet_frame(seed, p, {hx, hy}, anchors));

    // Advance the walks, keeping parts on the head.
    hx = std::clamp(hx + rng.uniform(-p.head_step, p.head_step), -p.head_bound, p.head_bound);
    hy = std::clamp(hy + rng.uniform(-p.head_step, p.head_step), -p.head_bound, p.head_bound);
    for (int i = 0; i < kPuppetParts; ++i) {
      lx[i] = std::clamp(lx[i] + rng.uniform(-p.walk_step, p.walk_step), -p.local_bound,
                         p.local_bound);
      ly[i] = std::clamp(ly[i] + rng.uniform(-p.walk_step, p.walk_step), -p.local_bound,
                         p.local_bound);
    }
  }
  return seq;
}

std::array<double, 2> dominant_centroid(const Tensor& image, int channel) {
  if (image.rank() != 3 || image.extent(0) != 3) {
    throw ShapeError("dominant_centroid: expects [3,H,W], got " + shape_str(image.shape()));
  }
  const int h = image.extent(1), w = image.extent(2);
  const int hw = h * w;
  const auto& v = image.values();
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < h; ++y) {
    const double yn = 2.0 * y / (h - 1) - 1.0;
    for (int x = 0; x < w; ++x) {
      const int idx = y * w + x;
      const double self = v[channel * hw + idx];
      double other = 0.0;
      for (int c = 0; c < 3; ++c) {
        if (c != channel) other = std::max(other, v[c * hw + idx]);
      }
      const double weight = std::max(0.0, self - other - 0.15);
      if (weight > 0.0) {
        const double xn = 2.0 * x / (w - 1) - 1.0;
        sw += weight;
        sx += weight * xn;
        sy += weight * yn;
      }
    }
  }
  if (sw <= 1e-12) return {0.0, 0.0};
  return {sx / sw, sy / sw};
}

}  // namespace dagankit
