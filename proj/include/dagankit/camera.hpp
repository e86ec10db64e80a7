#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dagankit/tensor.hpp"

namespace dagankit {

// --- Plain double-precision camera math (rendering, ground truth) -------------

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
};

struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
  static Mat3 identity() { return {}; }
  static Mat3 rodrigues(const Vec3& axis_angle);
  Vec3 apply(const Vec3& v) const;
  Mat3 mul(const Mat3& o) const;
  Mat3 transposed() const;
  double det() const;
};

// Pinhole intrinsics in pixel units.
struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  // fx,fy > 0 and principal point inside the image.
  void validate(int width, int height) const;
  Vec3 unproject(double u, double v, double depth) const;      // pixel -> camera ray point
  bool project(const Vec3& p, double* u, double* v) const;     // false if z <= 0
};

// Rigid transform source<-target: x_src = R x_tgt + t.
struct RelativePose {
  Vec3 axis_angle;
  Vec3 translation;
  Mat3 rotation() const { return Mat3::rodrigues(axis_angle); }
  static RelativePose identity() { return {}; }
};

// Depth bounds shared by the depth parameterization and the scene generator.
inline constexpr double kDepthMin = 0.1;
inline constexpr double kDepthMax = 100.0;

// --- Graph-connected reprojection ---------------------------------------------

// Camera quantities as one-element / small tensors so gradients reach the
// networks that predicted them.
struct CameraTensors {
  Tensor fx, fy, cx, cy;  // scalars
  Tensor rotation;        // [3,3]
  Tensor translation;     // [3]

  static CameraTensors constant(const Intrinsics& k, const RelativePose& pose);
};

// Rodrigues formula on the graph; v = [3] axis-angle, returns [3,3].
// Differentiable everywhere, with the series expansion below ~1e-4 radians.
Tensor axis_angle_to_rotation(const Tensor& v);

struct ReprojectResult {
  Tensor coords;        // [H,W,2] normalized, graph-connected
  Tensor coords_pixel;  // [H,W,2] pixel units, graph-connected
  Tensor valid;         // [H,W] constant 0/1 mask (transformed depth > 1e-6)
  int invalid_count = 0;
};

// Lift every pixel of the target view by its depth, apply the relative pose,
// and project into the source view (depth [H,W]).
ReprojectResult reproject(const Tensor& depth, const CameraTensors& cam);

struct ViewSynthesis {
  Tensor image;  // [C,H,W]
  Tensor valid;  // [H,W] constant 0/1 mask
};

// Bilinear warp of the source image to the target view.
ViewSynthesis synthesize_view(const Tensor& source, const ReprojectResult& repro);

}  // namespace dagankit
