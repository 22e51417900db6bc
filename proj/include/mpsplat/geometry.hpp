#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <stdexcept>

namespace mpsplat {

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct Intrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  bool contains(const Pixel& p) const {
    return p.u >= 0.0 && p.u <= width - 1 && p.v >= 0.0 && p.v <= height - 1;
  }
  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
};

// Rigid camera-from-world transform: x_cam = R * x_world + t.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }

  // TUM convention: quaternion (qx,qy,qz,qw), normalized on construction.
  static Pose from_quaternion(double qx, double qy, double qz, double qw,
                              const Eigen::Vector3d& t);
  // Returns (qx,qy,qz,qw) with qw >= 0.
  Eigen::Vector4d to_quaternion() const;

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }
};

Pose compose(const Pose& a, const Pose& b);  // a after b: (a*b)(x) = a(b(x))
Pose invert(const Pose& a);

struct DegenerateBaseline : std::runtime_error {
  DegenerateBaseline() : std::runtime_error("epipolar baseline is degenerate (|t| < 1e-12)") {}
};

// Pinhole projection, pixel = (fx*x/z + cx, fy*y/z + cy).
// Empty result means the point is behind the camera (z <= 0).
std::optional<Pixel> project(const Eigen::Vector3d& point_world, const Pose& pose,
                             const Intrinsics& k);

// Camera-frame ray through pixel scaled to the given depth: d * K^-1 * [u,v,1].
Eigen::Vector3d backproject(const Pixel& p, double depth, const Intrinsics& k);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

// F = K2^-T [t]x R K1^-1 for rel = pose of frame 2 w.r.t. frame 1,
// normalized to unit Frobenius norm. Throws DegenerateBaseline on |t| < 1e-12.
Eigen::Matrix3d fundamental_from_pose(const Pose& rel, const Intrinsics& k1,
                                      const Intrinsics& k2);

// Rodrigues exponential; used for the 6-dof pose increment in the optimizer.
Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& axis_angle);

}  // namespace mpsplat
