#include "dagankit/attention.hpp"

#include <cmath>

namespace dagankit {

Tensor depth_encode(const FeatureEncoder& enc, Binder& bind, const Tensor& depth_norm) {
  if (depth_norm.rank() != 3 || depth_norm.extent(0) != 1) {
    throw ShapeError("depth_encode: expects normalized [1,H,W] depth, got " +
                     shape_str(depth_norm.shape()));
  }
  return enc.forward(bind, depth_norm);
}

AttentionOutput cross_attention(const AttentionParams& params, Binder& bind, const Tensor& f_d,
                                const Tensor& f_w) {
  if (f_d.rank() != 3 || f_w.rank() != 3 || f_d.extent(1) != f_w.extent(1) ||
      f_d.extent(2) != f_w.extent(2)) {
    throw ShapeError("cross_attention: spatial mismatch between F_d " + shape_str(f_d.shape()) +
                     " and F_w " + shape_str(f_w.shape()));
  }
  const int h = f_w.extent(1), w = f_w.extent(2);
  const int n = h * w;
  const int cw = f_w.extent(0);

  Tensor q = params.query(bind, f_d);  // [Ca,h,w]
  Tensor k = params.key(bind, f_w);
  Tensor v = params.value(bind, f_w);  // [Cw,h,w]

  Tensor qt = transpose(reshape(q, {params.ca(), n}));  // [n,Ca]
  Tensor km = reshape(k, {params.ca(), n});             // [Ca,n]
  Tensor scores = scale(matmul(qt, km), 1.0 / std::sqrt(static_cast<double>(params.ca())));

  AttentionOutput out;
  out.attention = softmax(scores, 1);
  Tensor vt = transpose(reshape(v, {cw, n}));            // [n,Cw]
  out.refined = reshape(transpose(matmul(out.attention, vt)), {cw, h, w});
  return out;
}

Generator::Generator(const NetSizes& s, std::uint64_t seed)
    : sizes(s),
      keypoints(s, Rng(seed * 0x9e3779b97f4a7c15ull + 11)),
      occlusion(s, Rng(seed * 0x9e3779b97f4a7c15ull + 12)),
      appearance("enc_i", 3, s, Rng(seed * 0x9e3779b97f4a7c15ull + 13)),
      depth_enc("enc_d", 1, s, Rng(seed * 0x9e3779b97f4a7c15ull + 14)),
      attention(s, Rng(seed * 0x9e3779b97f4a7c15ull + 15)),
      decoder(s, Rng(seed * 0x9e3779b97f4a7c15ull + 16)) {}

std::vector<ParamStore*> Generator::param_stores() {
  return {&keypoints.params(), &occlusion.params(), &appearance.params(), &depth_enc.params(),
          &attention.params(), &decoder.params()};
}

std::vector<const ParamStore*> Generator::param_stores() const {
  return {&keypoints.params(), &occlusion.params(), &appearance.params(), &depth_enc.params(),
          &attention.params(), &decoder.params()};
}

Tensor generate(const Generator& gen, const DepthNet& frozen_depth, Binder& bind,
                const Tensor& source, const Tensor& driving, GenerateDiagnostics* diag) {
  Binder frozen(nullptr);  // the depth net never joins the graph
  Tensor d_s = depth_forward(frozen_depth, frozen, source);
  Tensor d_d = depth_forward(frozen_depth, frozen, driving);

  KeypointSet kp_s = detect_keypoints(gen.keypoints, bind, source, d_s);
  KeypointSet kp_d = detect_keypoints(gen.keypoints, bind, driving, d_d);
  Tensor offsets = keypoint_offsets(kp_s, kp_d);

  const int fh = source.extent(1) / 4, fw = source.extent(2) / 4;
  MotionBundle bundle;
  bundle.field = build_motion_field(offsets, kp_d.points, fh, fw, gen.motion);
  OcclusionMasks masks = occlusion_forward(gen.occlusion, bind, source, bundle.field);
  bundle.motion_mask = masks.motion_mask;
  bundle.occlusion_map = masks.occlusion_map;

  Tensor f_w = warp_features(gen.appearance, bind, source, bundle);
  Tensor f_d = depth_encode(gen.depth_enc, bind, normalize_depth(d_s));
  AttentionOutput att = cross_attention(gen.attention, bind, f_d, f_w);
  Tensor image = gen.decoder.forward(bind, att.refined);

  if (diag != nullptr) {
    diag->source_depth = reshape(d_s, {1, d_s.extent(0), d_s.extent(1)});
    diag->driving_depth = reshape(d_d, {1, d_d.extent(0), d_d.extent(1)});
    diag->source_kp = kp_s;
    diag->driving_kp = kp_d;
    diag->bundle = bundle;
    diag->attention = att.attention;
  }
  return image;
}

}  // namespace dagankit
