#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "evsplat/core.hpp"
#include "evsplat/geometry.hpp"

namespace evsplat {

// Real spherical harmonics basis constants, bands 0..3.
constexpr double kSH0 = 0.28209479177387814;
constexpr double kSH1 = 0.4886025119029199;
constexpr double kSH2[5] = {1.0925484305920792, -1.0925484305920792,
                            0.31539156525252005, -1.0925484305920792,
                            0.5462742152960396};
constexpr double kSH3[7] = {-0.5900435899266435, 2.890611442640554,
                            -0.4570457994644658, 0.3731763325901154,
                            -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

struct Gaussian3D {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();  // per-axis stddev, meters
  double opacity = 1.0;                             // [0, 1]
  std::vector<Eigen::Vector3d> sh;                  // one RGB triple per basis function
};

// World-frame covariance R diag(s^2) R^T; symmetric positive definite for any
// unit quaternion and positive scales.
inline Eigen::Matrix3d covariance(const Gaussian3D& g) {
  const Eigen::Matrix3d r = g.rotation.toRotationMatrix();
  return r * g.scale.cwiseProduct(g.scale).asDiagonal() * r.transpose();
}

// Evaluates the SH color for a unit view direction; the up-front degree-0 term
// plus the conventional +0.5 offset, clamped to non-negative per channel.
inline Eigen::Vector3d sh_to_color(const std::vector<Eigen::Vector3d>& sh, int degree,
                                   const Eigen::Vector3d& dir) {
  Eigen::Vector3d c = kSH0 * sh[0];
  if (degree > 0) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    c += -kSH1 * y * sh[1] + kSH1 * z * sh[2] - kSH1 * x * sh[3];
    if (degree > 1) {
      const double xx = x * x, yy = y * y, zz = z * z;
      const double xy = x * y, yz = y * z, xz = x * z;
      c += kSH2[0] * xy * sh[4] + kSH2[1] * yz * sh[5] +
           kSH2[2] * (2.0 * zz - xx - yy) * sh[6] + kSH2[3] * xz * sh[7] +
           kSH2[4] * (xx - yy) * sh[8];
      if (degree > 2) {
        c += kSH3[0] * y * (3.0 * xx - yy) * sh[9] + kSH3[1] * xy * z * sh[10] +
             kSH3[2] * y * (4.0 * zz - xx - yy) * sh[11] +
             kSH3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * sh[12] +
             kSH3[4] * x * (4.0 * zz - xx - yy) * sh[13] +
             kSH3[5] * z * (xx - yy) * sh[14] +
             kSH3[6] * x * (xx - 3.0 * yy) * sh[15];
      }
    }
  }
  c.array() += 0.5;
  return c.cwiseMax(0.0);
}

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
};

class GaussianMap {
 public:
  GaussianMap() = default;
  GaussianMap(std::vector<Gaussian3D> gaussians, int sh_degree)
      : gaussians_(std::move(gaussians)), sh_degree_(sh_degree) {
    if (sh_degree_ < 0 || sh_degree_ > 3)
      throw std::invalid_argument("GaussianMap: sh_degree must be in [0, 3]");
    const size_t want = static_cast<size_t>(sh_coeff_count(sh_degree_));
    for (auto& g : gaussians_) {
      if (g.sh.size() != want)
        throw std::invalid_argument("GaussianMap: sh coefficient count does not match degree");
      if (!(g.scale.array() > 0.0).all())
        throw std::invalid_argument("GaussianMap: scales must be positive");
      g.rotation.normalize();
    }
    recomputeBounds();
  }

  size_t size() const { return gaussians_.size(); }
  bool empty() const { return gaussians_.empty(); }
  int sh_degree() const { return sh_degree_; }
  const Gaussian3D& operator[](size_t i) const { return gaussians_[i]; }
  const std::vector<Gaussian3D>& gaussians() const { return gaussians_; }
  const Aabb& bounds() const { return bounds_; }

 private:
  void recomputeBounds() {
    if (gaussians_.empty()) return;
    bounds_.min = bounds_.max = gaussians_.front().mean;
    for (const auto& g : gaussians_) {
      bounds_.min = bounds_.min.cwiseMin(g.mean);
      bounds_.max = bounds_.max.cwiseMax(g.mean);
    }
  }

  std::vector<Gaussian3D> gaussians_;
  int sh_degree_ = 0;
  Aabb bounds_;
};

enum class ScenePattern { Wall, Cloud };

// Procedural test scenes. Wall: an nx-by-ny grid of near-isotropic splats on
// the plane z = depth, colored in a checkerboard of color_a/color_b. Cloud:
// seeded random splats inside a box, anisotropic and freely rotated.
struct SceneSpec {
  ScenePattern pattern = ScenePattern::Wall;
  int nx = 24;
  int ny = 18;
  double spacing = 0.05;         // grid pitch, meters
  double depth = 2.0;            // wall plane z
  double sigma = 0.015;          // in-plane stddev (wall) or max stddev (cloud)
  double thickness = 0.0015;     // wall normal-direction stddev
  double opacity = 0.8;
  Eigen::Vector3d color_a = Eigen::Vector3d(0.9, 0.9, 0.9);
  Eigen::Vector3d color_b = Eigen::Vector3d(0.1, 0.1, 0.1);
  double position_jitter = 0.0;  // uniform +-jitter per axis, meters
  double color_jitter = 0.0;     // uniform +-jitter per channel
  int sh_degree = 0;
  double rest_amplitude = 0.0;   // uniform +-amplitude on bands 1..degree
  Eigen::Vector3d box_half = Eigen::Vector3d(0.5, 0.4, 0.3);  // cloud extents
  Eigen::Vector3d box_center = Eigen::Vector3d(0.0, 0.0, 2.0);
  int count = 200;               // cloud size
  uint64_t seed = 1;
};

inline GaussianMap make_synthetic_map(const SceneSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int ncoeff = sh_coeff_count(spec.sh_degree);

  auto finish_sh = [&](Gaussian3D& g, const Eigen::Vector3d& rgb) {
    g.sh.assign(ncoeff, Eigen::Vector3d::Zero());
    g.sh[0] = (rgb.array() - 0.5) / kSH0;  // dc chosen so the degree-0 color is rgb
    for (int k = 1; k < ncoeff; ++k)
      g.sh[k] = spec.rest_amplitude * Eigen::Vector3d(sym(rng), sym(rng), sym(rng));
  };

  std::vector<Gaussian3D> out;
  if (spec.pattern == ScenePattern::Wall) {
    out.reserve(static_cast<size_t>(spec.nx) * spec.ny);
    for (int j = 0; j < spec.ny; ++j) {
      for (int i = 0; i < spec.nx; ++i) {
        Gaussian3D g;
        g.mean = Eigen::Vector3d((i - (spec.nx - 1) * 0.5) * spec.spacing,
                                 (j - (spec.ny - 1) * 0.5) * spec.spacing, spec.depth);
        if (spec.position_jitter > 0.0)
          g.mean += spec.position_jitter * Eigen::Vector3d(sym(rng), sym(rng), sym(rng));
        g.scale = Eigen::Vector3d(spec.sigma, spec.sigma, spec.thickness);
        g.opacity = spec.opacity;
        Eigen::Vector3d rgb = ((i + j) % 2 == 0) ? spec.color_a : spec.color_b;
        if (spec.color_jitter > 0.0)
          rgb += spec.color_jitter * Eigen::Vector3d(sym(rng), sym(rng), sym(rng));
        finish_sh(g, rgb.cwiseMax(0.0).cwiseMin(1.0));
        out.push_back(std::move(g));
      }
    }
  } else {
    out.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i) {
      Gaussian3D g;
      g.mean = spec.box_center +
               spec.box_half.cwiseProduct(Eigen::Vector3d(sym(rng), sym(rng), sym(rng)));
      g.rotation = Eigen::Quaterniond(gauss(rng), gauss(rng), gauss(rng), gauss(rng)).normalized();
      for (int a = 0; a < 3; ++a)
        g.scale[a] = spec.sigma * (0.2 + 0.8 * unit(rng));
      g.opacity = 0.2 + 0.75 * unit(rng);
      finish_sh(g, Eigen::Vector3d(unit(rng), unit(rng), unit(rng)));
      out.push_back(std::move(g));
    }
  }
  return GaussianMap(std::move(out), spec.sh_degree);
}

}  // namespace evsplat
