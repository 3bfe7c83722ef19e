#pragma once

#include <utility>

#include "evsplat/geometry.hpp"

namespace evsplat {

// Pose of the keyframe midpoint plus a first-order camera-frame velocity.
// All increments act by left multiplication on T_cw.
struct MotionState {
  RigidTransform t_cw;
  Eigen::Vector3d linear = Eigen::Vector3d::Zero();   // m/s
  Eigen::Vector3d angular = Eigen::Vector3d::Zero();  // rad/s
};

struct PoseIncrement {
  Eigen::Vector3d delta_t = Eigen::Vector3d::Zero();
  Eigen::Vector3d delta_theta = Eigen::Vector3d::Zero();
};

// T1 of the extended pose chain: the half-window velocity excursion, sign -1
// for the window start and +1 for the window end.
inline RigidTransform velocity_factor(const MotionState& s, double delta_tau, double sign) {
  const double h = sign * 0.5 * delta_tau;
  return v2t(h * s.linear, h * s.angular);
}

inline std::pair<RigidTransform, RigidTransform> boundary_poses(const MotionState& s,
                                                                double delta_tau) {
  return {velocity_factor(s, delta_tau, -1.0) * s.t_cw,
          velocity_factor(s, delta_tau, +1.0) * s.t_cw};
}

// Full chain T1 * T2 * T3 with T2 the multiplicative pose increment under
// optimization and T3 the current keyframe pose estimate.
inline RigidTransform compose_extended(const MotionState& s, const PoseIncrement& inc,
                                       double delta_tau, double sign) {
  return velocity_factor(s, delta_tau, sign) * v2t(inc.delta_t, inc.delta_theta) * s.t_cw;
}

// Folds an increment into the pose so the next linearization happens at zero.
// The rotation is re-orthonormalized after every fold; the products would
// otherwise drift off SO(3) over hundreds of iterations.
inline MotionState apply_increment(const MotionState& s, const PoseIncrement& inc) {
  MotionState out = s;
  out.t_cw = (v2t(inc.delta_t, inc.delta_theta) * s.t_cw).orthonormalizedRotation();
  return out;
}

// Constant-velocity extrapolation to the next keyframe midpoint.
inline MotionState predict_next(const MotionState& s, double dt) {
  MotionState out = s;
  out.t_cw = (v2t(dt * s.linear, dt * s.angular) * s.t_cw).orthonormalizedRotation();
  return out;
}

}  // namespace evsplat
