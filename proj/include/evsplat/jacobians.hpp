#pragma once

#include <vector>

#include "evsplat/geometry.hpp"
#include "evsplat/motion_model.hpp"
#include "evsplat/rasterizer.hpp"

namespace evsplat {

using Matrix36d = Eigen::Matrix<double, 3, 6>;
using Matrix96d = Eigen::Matrix<double, 9, 6>;

// Derivatives of the extended camera chain T' = T1 * T2 * T3 acting on a map
// point, with respect to the left-multiplicative disturbance of T2 (pose
// increment, columns [delta_t, delta_theta]) and of T1 (velocity, columns
// [delta_v, delta_omega] scaled by sign*delta_tau/2). Rotation derivatives
// are 9x6 over vec(R_cw) in column-major order.

inline Matrix36d point_pose_jacobian(const RigidTransform& t1, const RigidTransform& t2,
                                     const RigidTransform& t3, const Eigen::Vector3d& mu) {
  const Eigen::Vector3d q = t2 * (t3 * mu);
  Matrix36d j;
  j.leftCols<3>() = t1.rotation;
  j.rightCols<3>() = -t1.rotation * hat(q);
  return j;
}

inline Matrix96d rot_pose_jacobian(const RigidTransform& t1, const RigidTransform& t2,
                                   const RigidTransform& t3) {
  const Eigen::Matrix3d b = t2.rotation * t3.rotation;
  Matrix96d j = Matrix96d::Zero();
  for (int i = 0; i < 3; ++i)
    j.block<3, 3>(3 * i, 3) = -t1.rotation * hat(b.col(i));
  return j;
}

inline Matrix36d point_vel_jacobian(const RigidTransform& t1, const RigidTransform& t2,
                                    const RigidTransform& t3, const Eigen::Vector3d& mu,
                                    double delta_tau, double sign) {
  const Eigen::Vector3d p = t1 * (t2 * (t3 * mu));
  Matrix36d j;
  j.leftCols<3>() = Eigen::Matrix3d::Identity();
  j.rightCols<3>() = -hat(p);
  return (sign * 0.5 * delta_tau) * j;
}

inline Matrix96d rot_vel_jacobian(const RigidTransform& t1, const RigidTransform& t2,
                                  const RigidTransform& t3, double delta_tau, double sign) {
  const Eigen::Matrix3d a = t1.rotation * t2.rotation * t3.rotation;
  Matrix96d j = Matrix96d::Zero();
  for (int i = 0; i < 3; ++i)
    j.block<3, 3>(3 * i, 3) = -hat(a.col(i));
  return (sign * 0.5 * delta_tau) * j;
}

struct CameraDerivatives {
  Matrix36d point_pose;
  Matrix96d rot_pose;
  Matrix36d point_vel;
  Matrix96d rot_vel;
};

inline CameraDerivatives camera_derivatives(const RigidTransform& t1, const RigidTransform& t2,
                                            const RigidTransform& t3, const Eigen::Vector3d& mu,
                                            double delta_tau, double sign) {
  return {point_pose_jacobian(t1, t2, t3, mu), rot_pose_jacobian(t1, t2, t3),
          point_vel_jacobian(t1, t2, t3, mu, delta_tau, sign),
          rot_vel_jacobian(t1, t2, t3, delta_tau, sign)};
}

// Contracts per-splat rasterizer gradients into the 12-dim state gradient
// [delta_t, delta_theta, delta_v, delta_omega] for one boundary render. The
// chain is evaluated at zero increment (T2 = identity), which is where the
// tracker linearizes after every fold. Splat::cam_point already equals T'*mu,
// so the contraction never touches the map. Equivalent to assembling the four
// jacobians per splat and multiplying; written out because the rotation terms
// share one summed gradient and the point terms reduce to cross products.
inline Vector12d full_gradient(const RasterGradients& grads, const std::vector<Splat2D>& splats,
                               const Eigen::Matrix3d& r_cw, const RigidTransform& t1,
                               double delta_tau, double sign) {
  const double h = sign * 0.5 * delta_tau;
  const Eigen::Matrix3d r1t = t1.rotation.transpose();
  Eigen::Vector3d g_rho = Eigen::Vector3d::Zero();
  Eigen::Vector3d g_phi = Eigen::Vector3d::Zero();
  Eigen::Vector3d g_v = Eigen::Vector3d::Zero();
  Eigen::Vector3d g_w = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rot_sum = Eigen::Matrix3d::Zero();

  for (size_t i = 0; i < splats.size(); ++i) {
    const Eigen::Vector3d& g_p = grads.point[i];
    rot_sum += grads.rotation[i];
    if (g_p.isZero(0.0)) continue;
    const Eigen::Vector3d p = splats[i].cam_point;
    const Eigen::Vector3d q = r1t * (p - t1.translation);  // T2*T3*mu
    const Eigen::Vector3d tp = r1t * g_p;
    g_rho += tp;
    g_phi += q.cross(tp);
    g_v += h * g_p;
    g_w += h * p.cross(g_p);
  }

  // Rotation-gradient contraction; B = R2*R3 = R1^T * R_cw, A = R_cw.
  const Eigen::Matrix3d b = r1t * r_cw;
  const Eigen::Matrix3d c = r1t * rot_sum;
  for (int i = 0; i < 3; ++i) {
    g_phi += b.col(i).cross(c.col(i));
    g_w += h * r_cw.col(i).cross(rot_sum.col(i));
  }

  Vector12d out;
  out << g_rho, g_phi, g_v, g_w;
  return out;
}

}  // namespace evsplat
