#pragma once

#include <Eigen/Geometry>
#include <algorithm>
#include <stdexcept>
#include <vector>

#include "evsplat/geometry.hpp"

namespace evsplat {

struct TrajectorySample {
  double t = 0.0;
  RigidTransform t_cw;
};

// Time-indexed pose samples with interpolation: translation linearly, rotation
// by quaternion slerp, both directly in the world-to-camera parametrization.
// Queries outside the sampled span clamp to the end poses.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TrajectorySample> samples) : samples_(std::move(samples)) {
    for (size_t i = 1; i < samples_.size(); ++i)
      if (samples_[i].t <= samples_[i - 1].t)
        throw std::invalid_argument("Trajectory: timestamps must strictly increase");
  }

  void push(double t, const RigidTransform& t_cw) {
    if (!samples_.empty() && t <= samples_.back().t)
      throw std::invalid_argument("Trajectory: timestamps must strictly increase");
    samples_.push_back({t, t_cw});
  }

  size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const TrajectorySample& operator[](size_t i) const { return samples_[i]; }
  const std::vector<TrajectorySample>& samples() const { return samples_; }
  double start_time() const { return samples_.front().t; }
  double end_time() const { return samples_.back().t; }

  RigidTransform pose_at(double t) const {
    if (samples_.empty()) throw std::runtime_error("Trajectory: empty");
    if (t <= samples_.front().t) return samples_.front().t_cw;
    if (t >= samples_.back().t) return samples_.back().t_cw;
    const auto it = std::lower_bound(samples_.begin(), samples_.end(), t,
                                     [](const TrajectorySample& s, double v) { return s.t < v; });
    const TrajectorySample& hi = *it;
    const TrajectorySample& lo = *(it - 1);
    const double u = (t - lo.t) / (hi.t - lo.t);
    RigidTransform out;
    out.translation = (1.0 - u) * lo.t_cw.translation + u * hi.t_cw.translation;
    const Eigen::Quaterniond qa(lo.t_cw.rotation), qb(hi.t_cw.rotation);
    out.rotation = qa.slerp(u, qb).toRotationMatrix();
    return out;
  }

  // Nearest sample index within tolerance, or -1.
  int nearest(double t, double tolerance) const {
    if (samples_.empty()) return -1;
    const auto it = std::lower_bound(samples_.begin(), samples_.end(), t,
                                     [](const TrajectorySample& s, double v) { return s.t < v; });
    int best = -1;
    double best_dt = tolerance;
    if (it != samples_.end() && std::abs(it->t - t) <= best_dt) {
      best = static_cast<int>(it - samples_.begin());
      best_dt = std::abs(it->t - t);
    }
    if (it != samples_.begin() && std::abs((it - 1)->t - t) <= best_dt)
      best = static_cast<int>(it - samples_.begin()) - 1;
    return best;
  }

 private:
  std::vector<TrajectorySample> samples_;
};

// Central-difference body velocity of the left-increment convention
// T_cw(t+dt) = v2t(v dt, w dt) * T_cw(t); used to derive reference velocities
// from sampled ground truth.
inline void instantaneous_velocity(const Trajectory& traj, double t, double h,
                                   Eigen::Vector3d& linear, Eigen::Vector3d& angular) {
  const RigidTransform a = traj.pose_at(t - h);
  const RigidTransform b = traj.pose_at(t + h);
  const RigidTransform d = b * a.inverse();
  linear = d.translation / (2.0 * h);
  angular = rotation_log(d.rotation) / (2.0 * h);
}

}  // namespace evsplat
