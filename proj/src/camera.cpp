#include "dagankit/camera.hpp"

#include <cmath>

namespace dagankit {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Mat3 Mat3::rodrigues(const Vec3& w) {
  const double theta2 = w.dot(w);
  double a, b;
  if (theta2 < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const double kx = w.x, ky = w.y, kz = w.z;
  Mat3 r;
  r.m = {1.0 + b * (-kz * kz - ky * ky), a * -kz + b * kx * ky, a * ky + b * kx * kz,
         a * kz + b * kx * ky, 1.0 + b * (-kz * kz - kx * kx), a * -kx + b * ky * kz,
         a * -ky + b * kx * kz, a * kx + b * ky * kz, 1.0 + b * (-ky * ky - kx * kx)};
  return r;
}

Vec3 Mat3::apply(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::mul(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
      r.m[i * 3 + j] = s;
    }
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
  return r;
}

double Mat3::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

void Intrinsics::validate(int width, int height) const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ShapeError("intrinsics: focal lengths must be positive");
  }
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw ShapeError("intrinsics: principal point outside the image");
  }
}

Vec3 Intrinsics::unproject(double u, double v, double depth) const {
  return {depth * (u - cx) / fx, depth * (v - cy) / fy, depth};
}

bool Intrinsics::project(const Vec3& p, double* u, double* v) const {
  if (p.z <= 0.0) return false;
  *u = fx * p.x / p.z + cx;
  *v = fy * p.y / p.z + cy;
  return true;
}

CameraTensors CameraTensors::constant(const Intrinsics& k, const RelativePose& pose) {
  const Mat3 r = pose.rotation();
  return CameraTensors{
      Tensor::scalar(k.fx),
      Tensor::scalar(k.fy),
      Tensor::scalar(k.cx),
      Tensor::scalar(k.cy),
      Tensor({3, 3}, std::vector<double>(r.m.begin(), r.m.end())),
      Tensor({3}, {pose.translation.x, pose.translation.y, pose.translation.z}),
  };
}

Tensor axis_angle_to_rotation(const Tensor& v) {
  if (v.count() != 3) {
    throw ShapeError("axis_angle_to_rotation: expects a 3-vector, got " + shape_str(v.shape()));
  }
  Tensor wx = take(v, 0, 1), wy = take(v, 1, 1), wz = take(v, 2, 1);
  Tensor theta2 = add(add(mul(wx, wx), mul(wy, wy)), mul(wz, wz));

  Tensor a, b;
  if (theta2.item() < 1e-8) {
    // Series for sin(t)/t and (1-cos(t))/t^2; exact at t = 0.
    a = add_scalar(scale(theta2, -1.0 / 6.0), 1.0);
    b = add_scalar(scale(theta2, -1.0 / 24.0), 0.5);
  } else {
    Tensor theta = sqrt(theta2);
    a = div(sin(theta), theta);
    b = div(sub(Tensor::scalar(1.0), cos(theta)), theta2);
  }

  Tensor zero = Tensor::scalar(0.0);
  Tensor k = stack_scalars({zero, neg(wz), wy, wz, zero, neg(wx), neg(wy), wx, zero}, {3, 3});
  Tensor kk = matmul(k, k);
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  return add(add(eye, mul(k, a)), mul(kk, b));
}

ReprojectResult reproject(const Tensor& depth, const CameraTensors& cam) {
  if (depth.rank() != 2) {
    throw ShapeError("reproject: depth must be [H,W], got " + shape_str(depth.shape()));
  }
  const int h = depth.extent(0), w = depth.extent(1);
  const int n = h * w;
  for (double d : depth.values()) {
    if (d < kDepthMin - 1e-9 || d > kDepthMax + 1e-9) {
      throw NumericError("reproject: depth outside [" + std::to_string(kDepthMin) + "," +
                         std::to_string(kDepthMax) + "]");
    }
  }

  // Pixel index grids.
  std::vector<double> uv(n), vv(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uv[y * w + x] = x;
      vv[y * w + x] = y;
    }
  Tensor ug({n}, std::move(uv));
  Tensor vg({n}, std::move(vv));

  Tensor d = reshape(depth, {n});
  Tensor xr = div(sub(ug, cam.cx), cam.fx);
  Tensor yr = div(sub(vg, cam.cy), cam.fy);
  Tensor big_x = mul(d, xr);
  Tensor big_y = mul(d, yr);
  Tensor pts = reshape(concat({big_x, big_y, d}), {3, n});
  Tensor rotated = matmul(cam.rotation, pts);
  Tensor xs = add(take(rotated, 0, n), take(cam.translation, 0, 1));
  Tensor ys = add(take(rotated, n, n), take(cam.translation, 1, 1));
  Tensor zs = add(take(rotated, 2 * n, n), take(cam.translation, 2, 1));

  // Points at or behind the camera plane are flagged invalid and their
  // denominator replaced by 1 so no gradient (or Inf) leaks through.
  std::vector<double> mask(n, 1.0);
  int invalid = 0;
  for (int i = 0; i < n; ++i) {
    if (zs.at(i) <= 1e-6) {
      mask[i] = 0.0;
      ++invalid;
    }
  }
  Tensor z_safe = zs;
  if (invalid > 0) {
    std::vector<double> behind(n), fill(n);
    for (int i = 0; i < n; ++i) {
      behind[i] = mask[i];
      fill[i] = 1.0 - mask[i];
    }
    z_safe = add(mul(zs, Tensor({n}, std::move(behind))), Tensor({n}, std::move(fill)));
  }

  Tensor qu = add(mul(cam.fx, div(xs, z_safe)), cam.cx);
  Tensor qv = add(mul(cam.fy, div(ys, z_safe)), cam.cy);

  // Samples falling outside the source image would be border-clamped; they
  // carry no photometric information, so they are masked like behind-camera
  // points rather than allowed to poison the loss.
  constexpr double kFovEps = 1e-6;  // tolerate rounding at the border
  for (int i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    const double u = qu.at(i), v = qv.at(i);
    if (u < -kFovEps || u > w - 1 + kFovEps || v < -kFovEps || v > h - 1 + kFovEps) {
      mask[i] = 0.0;
      ++invalid;
    }
  }
  Tensor mask_t({n}, mask);

  ReprojectResult out;
  out.coords_pixel = reshape(interleave2(qu, qv), {h, w, 2});
  Tensor xn = add_scalar(scale(qu, w > 1 ? 2.0 / (w - 1) : 0.0), w > 1 ? -1.0 : 0.0);
  Tensor yn = add_scalar(scale(qv, h > 1 ? 2.0 / (h - 1) : 0.0), h > 1 ? -1.0 : 0.0);
  out.coords = reshape(interleave2(xn, yn), {h, w, 2});
  out.valid = reshape(mask_t, {h, w});
  out.invalid_count = invalid;
  return out;
}

ViewSynthesis synthesize_view(const Tensor& source, const ReprojectResult& repro) {
  if (source.rank() != 3) {
    throw ShapeError("synthesize_view: source must be [C,H,W], got " + shape_str(source.shape()));
  }
  return ViewSynthesis{grid_sample_bilinear(source, repro.coords), repro.valid};
}

}  // namespace dagankit
