#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <functional>
#include <random>

#include "evsplat/gaussian_map.hpp"
#include "evsplat/geometry.hpp"
#include "evsplat/rasterizer.hpp"

namespace test_support {

// Series matrix exponential with scaling and squaring; independent oracle for
// the closed-form rotation exponential. 30 terms after scaling the argument
// below norm 0.5 leaves the truncation error far under 1e-12.
inline Eigen::Matrix3d matexp_series(const Eigen::Matrix3d& a) {
  int squarings = 0;
  Eigen::Matrix3d s = a;
  while (s.norm() > 0.5) {
    s *= 0.5;
    ++squarings;
  }
  Eigen::Matrix3d result = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d term = Eigen::Matrix3d::Identity();
  for (int k = 1; k <= 30; ++k) {
    term = (term * s) / k;
    result += term;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

inline Eigen::Vector3d random_vector(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v(n(rng), n(rng), n(rng));
  return v.normalized();
}

inline evsplat::RigidTransform random_transform(std::mt19937_64& rng, double trans_scale = 1.0,
                                                double max_angle = 1.5) {
  std::uniform_real_distribution<double> ang(0.0, max_angle);
  return {evsplat::rodrigues(ang(rng) * random_unit(rng)), random_vector(rng, trans_scale)};
}

// Central difference over a scalar path parameter.
inline double central_diff(const std::function<double(double)>& f, double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

inline Eigen::VectorXd central_diff_vec(const std::function<Eigen::VectorXd(double)>& f,
                                        double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

// Small wall scene most rendering tests share: checkerboard of near-isotropic
// splats at two meters, filling a 128x96 view at f = 160.
inline evsplat::SceneSpec default_wall() {
  evsplat::SceneSpec spec;
  spec.pattern = evsplat::ScenePattern::Wall;
  spec.nx = 24;
  spec.ny = 18;
  spec.spacing = 0.07;
  spec.depth = 2.0;
  spec.sigma = 0.02;
  spec.opacity = 0.85;
  spec.color_jitter = 0.25;
  spec.seed = 11;
  return spec;
}

inline evsplat::SceneSpec default_cloud(int count = 120, int sh_degree = 0, uint64_t seed = 7) {
  evsplat::SceneSpec spec;
  spec.pattern = evsplat::ScenePattern::Cloud;
  spec.count = count;
  spec.sigma = 0.05;
  spec.sh_degree = sh_degree;
  spec.rest_amplitude = sh_degree > 0 ? 0.2 : 0.0;
  spec.box_half = Eigen::Vector3d(0.6, 0.45, 0.4);
  spec.box_center = Eigen::Vector3d(0.0, 0.0, 2.0);
  spec.seed = seed;
  return spec;
}

inline evsplat::CameraIntrinsics default_intrinsics(int w = 128, int h = 96, double f = 160.0) {
  evsplat::CameraIntrinsics intr;
  intr.width = w;
  intr.height = h;
  intr.fx = intr.fy = f;
  intr.cx = (w - 1) * 0.5;
  intr.cy = (h - 1) * 0.5;
  intr.near_clip = 0.05;
  return intr;
}

// Compact degree-0 scene with moderate opacities: no alpha clamping, no
// transmittance early exit, every splat comfortably inside a default_intrinsics
// view. Keeps the forward render smooth enough for central differences.
inline evsplat::GaussianMap fd_scene(uint64_t seed, int count = 8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-0.25, 0.25), uy(-0.18, 0.18),
      uz(1.6, 2.4), us(0.02, 0.06), uo(0.3, 0.6), uc(0.2, 0.9);
  std::vector<evsplat::Gaussian3D> gs(count);
  for (auto& g : gs) {
    g.mean = Eigen::Vector3d(ux(rng), uy(rng), uz(rng));
    g.scale = Eigen::Vector3d(us(rng), us(rng), us(rng));
    g.opacity = uo(rng);
    g.rotation = Eigen::Quaterniond(1, 0, 0, 0);
    g.sh.assign(1, (Eigen::Vector3d(uc(rng), uc(rng), uc(rng)) -
                    Eigen::Vector3d::Constant(0.5)) /
                       evsplat::kSH0);
  }
  return evsplat::GaussianMap(std::move(gs), 0);
}

// Render options for finite-difference tests: the wider evaluation window
// pushes the per-pixel cutoff discontinuity down to exp(-32), far below the
// difference quotient resolution.
inline evsplat::RenderOptions fd_options() {
  evsplat::RenderOptions opts;
  opts.eval_sigma = 8.0;
  return opts;
}

inline evsplat::ImageF64 random_weights(int w, int h, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  evsplat::ImageF64 img(w, h);
  for (size_t i = 0; i < img.size(); ++i) img.data()[i] = n(rng);
  return img;
}

inline double weighted_loss(const evsplat::GaussianMap& map, const evsplat::RigidTransform& t_cw,
                            const evsplat::CameraIntrinsics& intr,
                            const evsplat::RenderOptions& opts,
                            const evsplat::ImageF64& weights) {
  const evsplat::RenderedImage img = evsplat::render(map, t_cw, intr, opts);
  double loss = 0.0;
  for (size_t i = 0; i < weights.size(); ++i)
    loss += weights.data()[i] * img.log_intensity.data()[i];
  return loss;
}

}  // namespace test_support
