#pragma once

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evsplat/geometry.hpp"
#include "evsplat/trajectory.hpp"

namespace evsplat {

// Trajectory text files hold camera-to-world poses, one sample per line:
// "t tx ty tz qx qy qz qw", '#' starts a comment. Internally everything is
// world-to-camera, so poses are inverted on the way in and out. Quaternions
// are renormalized on load; non_unit counts the samples whose norm was off by
// more than 1e-3.
inline Trajectory load_trajectory_tum(const std::string& path, size_t* non_unit = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trajectory_tum: cannot open " + path);
  std::vector<TrajectorySample> samples;
  if (non_unit) *non_unit = 0;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first) || first[0] == '#') continue;
    double t, tx, ty, tz, qx, qy, qz, qw;
    try {
      t = std::stod(first);
    } catch (const std::exception&) {
      throw std::runtime_error("load_trajectory_tum: line " + std::to_string(line_no) +
                               ": bad timestamp");
    }
    if (!(ls >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw std::runtime_error("load_trajectory_tum: line " + std::to_string(line_no) +
                               ": expected 8 fields");
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (non_unit && std::abs(q.norm() - 1.0) > 1e-3) ++(*non_unit);
    q.normalize();
    const RigidTransform t_wc{q.toRotationMatrix(), Eigen::Vector3d(tx, ty, tz)};
    samples.push_back({t, t_wc.inverse()});
  }
  if (samples.empty())
    throw std::runtime_error("load_trajectory_tum: no samples in " + path);
  return Trajectory(std::move(samples));
}

inline void save_trajectory_tum(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_trajectory_tum: cannot open " + path);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char buf[256];
  for (const TrajectorySample& s : traj.samples()) {
    const RigidTransform t_wc = s.t_cw.inverse();
    Eigen::Quaterniond q(t_wc.rotation);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();  // canonical sign for stable bytes
    std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", s.t,
                  t_wc.translation.x(), t_wc.translation.y(), t_wc.translation.z(), q.x(),
                  q.y(), q.z(), q.w());
    out << buf;
  }
  if (!out) throw std::runtime_error("save_trajectory_tum: write failed for " + path);
}

// Left-multiplies every estimated camera-to-world pose by the rigid transform
// that maps the first associated estimate onto its ground-truth counterpart.
// This is the standard single-pose gauge fix applied before computing the
// absolute error of a tracker that was started from ground truth.
inline Trajectory align_first_pose(const Trajectory& est, const Trajectory& gt,
                                   double tolerance = 0.05) {
  int gi = -1;
  size_t ei = 0;
  for (; ei < est.size(); ++ei) {
    gi = gt.nearest(est[ei].t, tolerance);
    if (gi >= 0) break;
  }
  if (gi < 0)
    throw std::runtime_error("align_first_pose: no estimate within tolerance of ground truth");
  const RigidTransform est_wc = est[ei].t_cw.inverse();
  const RigidTransform gt_wc = gt[static_cast<size_t>(gi)].t_cw.inverse();
  const RigidTransform a = gt_wc * est_wc.inverse();

  std::vector<TrajectorySample> aligned;
  aligned.reserve(est.size());
  for (const TrajectorySample& s : est.samples())
    aligned.push_back({s.t, (a * s.t_cw.inverse()).inverse()});
  return Trajectory(std::move(aligned));
}

struct AteResult {
  double position_rmse_cm = 0.0;
  double orientation_rmse_deg = 0.0;
  size_t matched = 0;
  size_t total = 0;
  std::vector<double> timestamps;
  std::vector<double> position_errors_cm;     // camera-center distance
  std::vector<double> orientation_errors_deg; // geodesic angle
};

// Absolute trajectory error against the nearest ground-truth sample in time.
// Position error is the camera-center distance; orientation error is the
// geodesic angle of the relative rotation, which is the same in either pose
// convention.
inline AteResult ate(const Trajectory& est, const Trajectory& gt, double tolerance = 0.01) {
  AteResult res;
  res.total = est.size();
  double pos2 = 0.0, ang2 = 0.0;
  for (const TrajectorySample& s : est.samples()) {
    const int gi = gt.nearest(s.t, tolerance);
    if (gi < 0) continue;
    const RigidTransform& g = gt[static_cast<size_t>(gi)].t_cw;
    const Eigen::Vector3d c_est = -(s.t_cw.rotation.transpose() * s.t_cw.translation);
    const Eigen::Vector3d c_gt = -(g.rotation.transpose() * g.translation);
    const double pos_cm = 100.0 * (c_est - c_gt).norm();
    const double ang_deg =
        rotation_angle(s.t_cw.rotation * g.rotation.transpose()) * 180.0 / M_PI;
    res.timestamps.push_back(s.t);
    res.position_errors_cm.push_back(pos_cm);
    res.orientation_errors_deg.push_back(ang_deg);
    pos2 += pos_cm * pos_cm;
    ang2 += ang_deg * ang_deg;
    ++res.matched;
  }
  if (res.matched > 0) {
    res.position_rmse_cm = std::sqrt(pos2 / res.matched);
    res.orientation_rmse_deg = std::sqrt(ang2 / res.matched);
  }
  return res;
}

inline void save_errors_csv(const AteResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_errors_csv: cannot open " + path);
  out << "timestamp,position_error_cm,orientation_error_deg\n";
  char buf[128];
  for (size_t i = 0; i < res.matched; ++i) {
    std::snprintf(buf, sizeof(buf), "%.9f,%.6f,%.6f\n", res.timestamps[i],
                  res.position_errors_cm[i], res.orientation_errors_deg[i]);
    out << buf;
  }
}

}  // namespace evsplat
