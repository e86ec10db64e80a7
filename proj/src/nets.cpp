#include "dagankit/nets.hpp"

#include <cmath>

namespace dagankit {

Conv make_conv(ParamStore& store, Rng& rng, const std::string& name, int cin, int cout, int k,
               int stride, int pad, double gain) {
  Conv c;
  const int fan_in = cin * k * k;
  c.w = &store.add(name + ".w", {cout, cin, k, k},
                   gain == 0.0 ? std::vector<double>(cout * cin * k * k, 0.0)
                               : he_normal(rng, fan_in, cout * cin * k * k, gain));
  c.b = &store.add(name + ".b", {cout}, std::vector<double>(cout, 0.0));
  c.stride = stride;
  c.pad = pad;
  return c;
}

Linear make_linear(ParamStore& store, Rng& rng, const std::string& name, int in, int out,
                   double gain) {
  Linear l;
  l.w = &store.add(name + ".w", {out, in},
                   gain == 0.0 ? std::vector<double>(static_cast<size_t>(out) * in, 0.0)
                               : he_normal(rng, in, out * in, gain));
  l.b = &store.add(name + ".b", {out}, std::vector<double>(out, 0.0));
  return l;
}

Tensor Linear::operator()(Binder& bind, const Tensor& x) const {
  Tensor col = reshape(x, {x.count(), 1});
  Tensor y = matmul(bind(*w), col);
  return add(reshape(y, {y.extent(0)}), bind(*b));
}

// --- DepthNet -------------------------------------------------------------------

DepthNet::DepthNet(const NetSizes& s, Rng rng) {
  enc1_ = make_conv(store_, rng, "enc1", 3, s.depth_c1, 3, 2, 1);
  enc2_ = make_conv(store_, rng, "enc2", s.depth_c1, s.depth_c2, 3, 2, 1);
  enc3_ = make_conv(store_, rng, "enc3", s.depth_c2, s.depth_c3, 3, 2, 1);
  enc4_ = make_conv(store_, rng, "enc4", s.depth_c3, s.depth_c4, 3, 2, 1);
  dec3_ = make_conv(store_, rng, "dec3", s.depth_c4 + s.depth_c3, s.depth_c3, 3, 1, 1);
  dec2_ = make_conv(store_, rng, "dec2", s.depth_c3 + s.depth_c2, s.depth_c2, 3, 1, 1);
  dec1_ = make_conv(store_, rng, "dec1", s.depth_c2 + s.depth_c1, s.depth_c1, 3, 1, 1);
  dec0_ = make_conv(store_, rng, "dec0", s.depth_c1, s.depth_c1, 3, 1, 1);
  head_ = make_conv(store_, rng, "head", s.depth_c1, 1, 3, 1, 1, 0.2);
}

Tensor DepthNet::forward(Binder& bind, const Tensor& image) const {
  if (image.rank() != 3 || image.extent(0) != 3 || image.extent(1) % 16 != 0 ||
      image.extent(2) % 16 != 0) {
    throw ShapeError("depth net: expects [3,H,W] with H,W divisible by 16, got " +
                     shape_str(image.shape()));
  }
  Tensor e1 = relu(enc1_(bind, image));  // H/2
  Tensor e2 = relu(enc2_(bind, e1));     // H/4
  Tensor e3 = relu(enc3_(bind, e2));     // H/8
  Tensor e4 = relu(enc4_(bind, e3));     // H/16
  Tensor d3 = relu(dec3_(bind, concat({upsample_bilinear(e4, 2), e3})));
  Tensor d2 = relu(dec2_(bind, concat({upsample_bilinear(d3, 2), e2})));
  Tensor d1 = relu(dec1_(bind, concat({upsample_bilinear(d2, 2), e1})));
  Tensor d0 = relu(dec0_(bind, upsample_bilinear(d1, 2)));
  return sigmoid(head_(bind, d0));
}

// --- PoseNet ---------------------------------------------------------------------

PoseNet::PoseNet(const NetSizes& s, Rng rng) {
  c1_ = make_conv(store_, rng, "c1", 6, s.pose_c1, 3, 2, 1);
  c2_ = make_conv(store_, rng, "c2", s.pose_c1, s.pose_c2, 3, 2, 1);
  c3_ = make_conv(store_, rng, "c3", s.pose_c2, s.pose_c3, 3, 2, 1);
  c4_ = make_conv(store_, rng, "c4", s.pose_c3, s.pose_c4, 3, 2, 1);
  // Small nonzero rotation/translation heads: the exact identity pose lands
  // every reprojected coordinate on a pixel center where the bilinear
  // subgradient vanishes, so a zero init would never receive a gradient.
  rot_ = make_linear(store_, rng, "rot", s.pose_c4, 3, 0.5);
  trans_ = make_linear(store_, rng, "trans", s.pose_c4, 3, 0.5);
  intr_ = make_linear(store_, rng, "intr", s.pose_c4, 4, 0.0);
}

PoseRaw PoseNet::forward(Binder& bind, const Tensor& pair) const {
  if (pair.rank() != 3 || pair.extent(0) != 6) {
    throw ShapeError("pose net: expects [6,H,W], got " + shape_str(pair.shape()));
  }
  Tensor f = relu(c1_(bind, pair));
  f = relu(c2_(bind, f));
  f = relu(c3_(bind, f));
  f = relu(c4_(bind, f));
  Tensor pooled = spatial_mean(f);
  return PoseRaw{rot_(bind, pooled), trans_(bind, pooled), intr_(bind, pooled)};
}

CameraTensors decode_pose(const PoseRaw& raw, int width, int height) {
  CameraTensors cam;
  cam.rotation = axis_angle_to_rotation(scale(raw.rotation, 0.01));
  cam.translation = scale(raw.translation, 0.01);
  cam.fx = scale(softplus(take(raw.intrinsics, 0, 1)), width);
  cam.fy = scale(softplus(take(raw.intrinsics, 1, 1)), width);
  cam.cx = scale(sigmoid(take(raw.intrinsics, 2, 1)), width);
  cam.cy = scale(sigmoid(take(raw.intrinsics, 3, 1)), height);
  return cam;
}

// --- KeypointNet ------------------------------------------------------------------

KeypointNet::KeypointNet(const NetSizes& s, Rng rng) : k_(s.keypoints) {
  enc1_ = make_conv(store_, rng, "enc1", 4, s.kp_c1, 3, 1, 1);
  enc2_ = make_conv(store_, rng, "enc2", s.kp_c1, s.kp_c2, 3, 1, 1);
  dec1_ = make_conv(store_, rng, "dec1", s.kp_c2 + s.kp_c1, s.kp_dec, 3, 1, 1);
  head_ = make_conv(store_, rng, "head", s.kp_dec, s.keypoints, 3, 1, 1, 0.1);
}

KeypointOutput KeypointNet::forward(Binder& bind, const Tensor& rgbd) const {
  if (rgbd.rank() != 3 || rgbd.extent(0) != 4) {
    throw ShapeError("keypoint net: expects [4,H,W], got " + shape_str(rgbd.shape()));
  }
  // Stride-1 convolutions with average-pool downsampling keep the detector
  // exactly equivariant to horizontal/vertical mirroring.
  Tensor e1 = avg_pool(relu(enc1_(bind, rgbd)), 2);  // H/2
  Tensor e2 = avg_pool(relu(enc2_(bind, e1)), 2);    // H/4
  Tensor d1 = relu(dec1_(bind, concat({upsample_bilinear(e2, 2), e1})));
  Tensor logits = head_(bind, d1);  // [K, H/2, W/2]

  const int hh = logits.extent(1), wh = logits.extent(2);
  Tensor flat = reshape(logits, {k_, hh * wh});
  Tensor heat = softmax(flat, 1);
  Tensor grid = reshape(identity_grid(hh, wh), {hh * wh, 2});
  KeypointOutput out;
  out.points = matmul(heat, grid);  // convex combination of grid coords
  out.heatmaps = reshape(heat, {k_, hh, wh});
  return out;
}

// --- OcclusionNet ------------------------------------------------------------------

OcclusionNet::OcclusionNet(const NetSizes& s, Rng rng) {
  c1_ = make_conv(store_, rng, "c1", 3, s.occl_c, 3, 1, 1);
  c2_ = make_conv(store_, rng, "c2", s.occl_c, s.occl_c, 3, 1, 1);
  // Zero-initialized heads open both gates halfway.
  head_m_ = make_conv(store_, rng, "head_m", s.occl_c, 1, 3, 1, 1, 0.0);
  head_o_ = make_conv(store_, rng, "head_o", s.occl_c, 1, 3, 1, 1, 0.0);
}

OcclusionMasks OcclusionNet::forward(Binder& bind, const Tensor& warped) const {
  Tensor f = relu(c1_(bind, warped));
  f = relu(c2_(bind, f));
  return OcclusionMasks{sigmoid(head_m_(bind, f)), sigmoid(head_o_(bind, f))};
}

// --- FeatureEncoder -----------------------------------------------------------------

FeatureEncoder::FeatureEncoder(const std::string& prefix, int in_channels, const NetSizes& s,
                               Rng rng)
    : store_(prefix) {
  c1_ = make_conv(store_, rng, "c1", in_channels, s.warp_c1, 3, 2, 1);
  c2_ = make_conv(store_, rng, "c2", s.warp_c1, s.warp_c, 3, 2, 1);
}

Tensor FeatureEncoder::forward(Binder& bind, const Tensor& x) const {
  return relu(c2_(bind, relu(c1_(bind, x))));
}

// --- AttentionParams ---------------------------------------------------------------

AttentionParams::AttentionParams(const NetSizes& s, Rng rng) : ca_(s.attn_ca) {
  wq_ = make_conv(store_, rng, "wq", s.warp_c, s.attn_ca, 1, 1, 0);
  wk_ = make_conv(store_, rng, "wk", s.warp_c, s.attn_ca, 1, 1, 0);
  wv_ = make_conv(store_, rng, "wv", s.warp_c, s.warp_c, 1, 1, 0);
}

// --- GenDecoder ----------------------------------------------------------------------

GenDecoder::GenDecoder(const NetSizes& s, Rng rng) {
  res1_ = make_conv(store_, rng, "res1", s.warp_c, s.warp_c, 3, 1, 1);
  res2_ = make_conv(store_, rng, "res2", s.warp_c, s.warp_c, 3, 1, 1);
  up1_ = make_conv(store_, rng, "up1", s.warp_c, s.dec_c1, 3, 1, 1);
  up2_ = make_conv(store_, rng, "up2", s.dec_c1, s.dec_c2, 3, 1, 1);
  head_ = make_conv(store_, rng, "head", s.dec_c2, 3, 3, 1, 1, 0.2);
}

Tensor GenDecoder::forward(Binder& bind, const Tensor& f_g) const {
  Tensor x = add(f_g, res1_(bind, relu(f_g)));
  x = add(x, res2_(bind, relu(x)));
  x = relu(up1_(bind, upsample_bilinear(x, 2)));
  x = relu(up2_(bind, upsample_bilinear(x, 2)));
  return sigmoid(head_(bind, x));
}

// --- Discriminator ---------------------------------------------------------------------

Discriminator::Discriminator(const NetSizes& s, Rng rng) {
  c1_ = make_conv(store_, rng, "c1", 3, s.disc_c1, 3, 2, 1);
  c2_ = make_conv(store_, rng, "c2", s.disc_c1, s.disc_c2, 3, 2, 1);
  c3_ = make_conv(store_, rng, "c3", s.disc_c2, s.disc_c3, 3, 2, 1);
  c4_ = make_conv(store_, rng, "c4", s.disc_c3, s.disc_c4, 3, 2, 1);
  head_ = make_conv(store_, rng, "head", s.disc_c4, 1, 1, 1, 0);
}

DiscOutput Discriminator::forward(Binder& bind, const Tensor& image) const {
  DiscOutput out;
  Tensor f = leaky_relu(c1_(bind, image), 0.2);
  out.features.push_back(f);
  f = leaky_relu(c2_(bind, f), 0.2);
  out.features.push_back(f);
  f = leaky_relu(c3_(bind, f), 0.2);
  out.features.push_back(f);
  f = leaky_relu(c4_(bind, f), 0.2);
  out.features.push_back(f);
  out.prediction = head_(bind, f);
  return out;
}

// --- FeatureExtractor ---------------------------------------------------------------------

FeatureExtractor::FeatureExtractor(const NetSizes& s, std::uint64_t seed) {
  Rng rng(seed ^ 0xfeedfaceb00cull);
  c1_ = make_conv(store_, rng, "c1", 3, s.feat_c, 3, 2, 1);
  c2_ = make_conv(store_, rng, "c2", s.feat_c, s.feat_c, 3, 2, 1);
  c3_ = make_conv(store_, rng, "c3", s.feat_c, s.feat_c, 3, 2, 1);
  c4_ = make_conv(store_, rng, "c4", s.feat_c, s.feat_c, 3, 2, 1);
}

std::vector<Tensor> FeatureExtractor::stages(const Tensor& image) const {
  // Parameters enter as constants: the extractor is frozen by construction.
  auto run = [&](const Conv& c, const Tensor& x) {
    return relu(bias_add(conv2d(x, c.w->tensor(), c.stride, c.pad), c.b->tensor()));
  };
  std::vector<Tensor> out;
  out.push_back(run(c1_, image));
  out.push_back(run(c2_, out.back()));
  out.push_back(run(c3_, out.back()));
  out.push_back(run(c4_, out.back()));
  return out;
}

}  // namespace dagankit
