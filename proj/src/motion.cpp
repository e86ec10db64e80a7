#include "dagankit/motion.hpp"

#include <sstream>

namespace dagankit {

Tensor normalize_depth(const Tensor& depth) {
  if (depth.rank() != 2) {
    throw ShapeError("normalize_depth: expects [H,W], got " + shape_str(depth.shape()));
  }
  Tensor shifted = add_scalar(depth, -kDepthMin);
  return reshape(scale(shifted, 1.0 / (kDepthMax - kDepthMin)),
                 {1, depth.extent(0), depth.extent(1)});
}

KeypointSet detect_keypoints(const KeypointNet& net, Binder& bind, const Tensor& image,
                             const Tensor& depth) {
  if (image.rank() != 3 || depth.rank() != 2 || image.extent(1) != depth.extent(0) ||
      image.extent(2) != depth.extent(1)) {
    throw ShapeError("detect_keypoints: depth " + shape_str(depth.shape()) +
                     " is not aligned with image " + shape_str(image.shape()));
  }
  Tensor rgbd = concat({image, normalize_depth(depth)});
  KeypointOutput out = net.forward(bind, rgbd);
  return KeypointSet{out.points, out.heatmaps};
}

Tensor keypoint_offsets(const KeypointSet& src, const KeypointSet& drv) {
  if (src.points.shape() != drv.points.shape()) {
    throw ShapeError("keypoint_offsets: keypoint counts differ, " +
                     shape_str(src.points.shape()) + " vs " + shape_str(drv.points.shape()));
  }
  return sub(src.points, drv.points);
}

Tensor build_motion_field(const Tensor& offsets, const Tensor& drv_points, int h, int w,
                          const MotionFieldConfig& cfg) {
  if (offsets.rank() != 2 || offsets.extent(1) != 2 || offsets.shape() != drv_points.shape()) {
    throw ShapeError("build_motion_field: offsets " + shape_str(offsets.shape()) +
                     " and keypoints " + shape_str(drv_points.shape()) + " must both be [K,2]");
  }
  const int k = offsets.extent(0);
  const int n = h * w;

  // Identity grid components (constants).
  std::vector<double> gxv(n), gyv(n);
  for (int y = 0; y < h; ++y) {
    const double yn = h == 1 ? 0.0 : 2.0 * y / (h - 1) - 1.0;
    for (int x = 0; x < w; ++x) {
      gxv[y * w + x] = w == 1 ? 0.0 : 2.0 * x / (w - 1) - 1.0;
      gyv[y * w + x] = yn;
    }
  }
  Tensor gx({n}, std::move(gxv));
  Tensor gy({n}, std::move(gyv));

  const double inv2s2 = -1.0 / (2.0 * cfg.sigma * cfg.sigma);
  std::vector<Tensor> weights;
  weights.reserve(k);
  Tensor denom = Tensor::full({n}, cfg.background_weight);
  for (int i = 0; i < k; ++i) {
    Tensor dx = sub(gx, take(drv_points, 2 * i, 1));
    Tensor dy = sub(gy, take(drv_points, 2 * i + 1, 1));
    Tensor wn = exp(scale(add(mul(dx, dx), mul(dy, dy)), inv2s2));
    denom = add(denom, wn);
    weights.push_back(std::move(wn));
  }

  Tensor disp_x, disp_y;
  for (int i = 0; i < k; ++i) {
    Tensor wn_hat = div(weights[i], denom);
    Tensor cx = mul(wn_hat, take(offsets, 2 * i, 1));
    Tensor cy = mul(wn_hat, take(offsets, 2 * i + 1, 1));
    disp_x = i == 0 ? std::move(cx) : add(disp_x, cx);
    disp_y = i == 0 ? std::move(cy) : add(disp_y, cy);
  }

  return reshape(interleave2(add(gx, disp_x), add(gy, disp_y)), {h, w, 2});
}

OcclusionMasks occlusion_forward(const OcclusionNet& net, Binder& bind, const Tensor& image,
                                 const Tensor& field) {
  if (field.rank() != 3 || field.extent(2) != 2) {
    throw ShapeError("occlusion_forward: field must be [h,w,2], got " + shape_str(field.shape()));
  }
  const int factor = image.extent(1) / field.extent(0);
  if (factor < 1 || image.extent(1) != field.extent(0) * factor ||
      image.extent(2) != field.extent(1) * factor) {
    throw ShapeError("occlusion_forward: field " + shape_str(field.shape()) +
                     " does not down-scale image " + shape_str(image.shape()));
  }
  Tensor pooled = factor == 1 ? image : avg_pool(image, factor);
  Tensor warped = grid_sample_bilinear(pooled, field);
  return net.forward(bind, warped);
}

Tensor warp_features(const FeatureEncoder& encoder, Binder& bind, const Tensor& source_image,
                     const MotionBundle& bundle) {
  Tensor features = encoder.forward(bind, source_image);
  const int h = bundle.field.extent(0), w = bundle.field.extent(1);
  if (features.extent(1) != h || features.extent(2) != w) {
    throw ShapeError("warp_features: field " + shape_str(bundle.field.shape()) +
                     " does not match features " + shape_str(features.shape()));
  }
  const int n = h * w;
  Tensor z = reshape(identity_grid(h, w), {n * 2});
  Tensor flat = reshape(bundle.field, {n * 2});
  Tensor m = reshape(bundle.motion_mask, {n});
  Tensor m2 = reshape(interleave2(m, m), {n * 2});  // same confidence on both axes
  Tensor gated = add(mul(sub(flat, z), m2), z);
  Tensor warped = grid_sample_bilinear(features, reshape(gated, {h, w, 2}));
  return mul(tile_channels(bundle.occlusion_map, features.extent(0)), warped);
}

std::string keypoints_to_text(const Tensor& points) {
  if (points.rank() != 2 || points.extent(1) != 2) {
    throw ShapeError("keypoints_to_text: expects [K,2], got " + shape_str(points.shape()));
  }
  std::ostringstream os;
  for (int i = 0; i < points.extent(0); ++i) {
    os << i << "," << points.at(2 * i) << "," << points.at(2 * i + 1) << "\n";
  }
  return os.str();
}

}  // namespace dagankit
