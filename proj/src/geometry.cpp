#include "mpsplat/geometry.hpp"

namespace mpsplat {

Pose Pose::from_quaternion(double qx, double qy, double qz, double qw,
                           const Eigen::Vector3d& t) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  q.normalize();
  Pose p;
  p.rotation = q.toRotationMatrix();
  p.translation = t;
  return p;
}

Eigen::Vector4d Pose::to_quaternion() const {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return {q.x(), q.y(), q.z(), q.w()};
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Pose invert(const Pose& a) {
  Pose out;
  out.rotation = a.rotation.transpose();
  out.translation = -out.rotation * a.translation;
  return out;
}

std::optional<Pixel> project(const Eigen::Vector3d& point_world, const Pose& pose,
                             const Intrinsics& k) {
  const Eigen::Vector3d xc = pose.apply(point_world);
  if (xc.z() <= 0.0) return std::nullopt;
  return Pixel{k.fx * xc.x() / xc.z() + k.cx, k.fy * xc.y() / xc.z() + k.cy};
}

Eigen::Vector3d backproject(const Pixel& p, double depth, const Intrinsics& k) {
  return {depth * (p.u - k.cx) / k.fx, depth * (p.v - k.cy) / k.fy, depth};
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Matrix3d fundamental_from_pose(const Pose& rel, const Intrinsics& k1,
                                      const Intrinsics& k2) {
  if (rel.translation.norm() < 1e-12) throw DegenerateBaseline{};
  const Eigen::Matrix3d e = skew(rel.translation) * rel.rotation;
  Eigen::Matrix3d f = k2.matrix().inverse().transpose() * e * k1.matrix().inverse();
  return f / f.norm();
}

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& axis_angle) {
  const double theta = axis_angle.norm();
  if (theta < 1e-12) {
    return Eigen::Matrix3d::Identity() + skew(axis_angle);
  }
  return Eigen::AngleAxisd(theta, axis_angle / theta).toRotationMatrix();
}

}  // namespace mpsplat
