#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

namespace evsplat {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector9d = Eigen::Matrix<double, 9, 1>;
using Vector12d = Eigen::Matrix<double, 12, 1>;

inline Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  return m;
}

// exp([phi]x) via Rodrigues. Below the angle guard the sin/cos coefficients
// switch to their second-order Taylor expansions so the map stays smooth
// through phi = 0.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a, b;  // coefficients of [phi]x and [phi]x^2
  if (theta < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Eigen::Matrix3d k = hat(phi);
  return Eigen::Matrix3d::Identity() + a * k + b * (k * k);
}

inline Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

// Geodesic distance to identity; convention-independent under transpose.
inline double rotation_angle(const Eigen::Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

// Nearest rotation via the quaternion round trip; cheap enough to apply after
// every multiplicative pose update so drift never accumulates.
inline Eigen::Matrix3d orthonormalized(const Eigen::Matrix3d& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return q.toRotationMatrix();
}

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform Identity() { return {}; }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  RigidTransform operator*(const RigidTransform& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  RigidTransform inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  RigidTransform orthonormalizedRotation() const {
    return {orthonormalized(rotation), translation};
  }
};

// Twist-to-transform on SO(3) x R^3: the rotation is exponentiated, the
// translation is taken directly (no SE(3) left-Jacobian coupling).
inline RigidTransform v2t(const Eigen::Vector3d& rho, const Eigen::Vector3d& phi) {
  return {rodrigues(phi), rho};
}

}  // namespace evsplat
