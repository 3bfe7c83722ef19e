#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "evsplat/camera.hpp"
#include "evsplat/core.hpp"
#include "evsplat/gaussian_map.hpp"
#include "evsplat/geometry.hpp"

namespace evsplat {

struct RenderOptions {
  double alpha_clamp = 0.99;        // per-contribution opacity ceiling
  double min_transmittance = 1e-4;  // early-out once the pixel is saturated
  double cov_reg = 0.3;             // pixels^2 added to the projected covariance
  double intensity_floor = 1e-3;    // luma floor inside the log
  double cull_sigma = 3.0;          // whole-splat visibility radius
  double eval_sigma = 6.0;          // per-pixel evaluation window radius
  int tile_size = 16;
  int threads = 1;
};

inline const Eigen::Vector3d& luma_weights() {
  static const Eigen::Vector3d w(0.299, 0.587, 0.114);
  return w;
}

struct Splat2D {
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d cov2d;      // regularized projected covariance
  Eigen::Matrix2d cov2d_inv;
  double depth = 0.0;         // camera-frame z
  double radius = 0.0;        // eval_sigma * sqrt(lambda_max), pixels
  Eigen::Vector3d color;
  double opacity = 0.0;
  Eigen::Vector3d cam_point;  // T_cw * mean
  Eigen::Matrix3d cov_cam;    // R_cw Sigma R_cw^T
  uint32_t source = 0;        // index into the map
};

struct BlendRecord {
  uint32_t splat;  // index into RenderedImage::splats
  double alpha;    // after the ceiling clamp
  double trans;    // transmittance in front of this contribution
};

struct RenderedImage {
  ImageF64 log_intensity;
  ImageF64 luma;  // pre-log blended luma, needed by the backward pass
  std::vector<Splat2D> splats;
  std::vector<BlendRecord> records;
  std::vector<uint32_t> record_start;  // per pixel, into records
  std::vector<uint32_t> record_count;
  Eigen::Matrix3d R_cw;
  CameraIntrinsics intrinsics;
  RenderOptions options;
};

// Projects one gaussian through the pinhole linearization: mean by perspective
// division, covariance by the EWA first-order propagation, plus an isotropic
// regularizer that keeps the 2x2 invertible. Returns nothing when the splat
// is behind the near plane or its cull_sigma box misses the image rectangle.
inline std::optional<Splat2D> project_gaussian(const Gaussian3D& g, uint32_t source,
                                               const RigidTransform& t_cw,
                                               const CameraIntrinsics& intr,
                                               const RenderOptions& opts) {
  const Eigen::Vector3d p = t_cw * g.mean;
  if (p.z() <= intr.near_clip) return std::nullopt;

  const double iz = 1.0 / p.z();
  Splat2D s;
  s.cam_point = p;
  s.depth = p.z();
  s.mean2d = Eigen::Vector2d(intr.fx * p.x() * iz + intr.cx, intr.fy * p.y() * iz + intr.cy);

  Eigen::Matrix<double, 2, 3> j;
  j << intr.fx * iz, 0.0, -intr.fx * p.x() * iz * iz,
       0.0, intr.fy * iz, -intr.fy * p.y() * iz * iz;
  const Eigen::Matrix3d r = t_cw.rotation;
  s.cov_cam = r * covariance(g) * r.transpose();
  s.cov2d = j * s.cov_cam * j.transpose();
  s.cov2d(0, 0) += opts.cov_reg;
  s.cov2d(1, 1) += opts.cov_reg;

  const double a = s.cov2d(0, 0), b = s.cov2d(0, 1), c = s.cov2d(1, 1);
  const double det = a * c - b * b;
  const double lambda_max = 0.5 * ((a + c) + std::sqrt((a - c) * (a - c) + 4.0 * b * b));
  const double cull_radius = opts.cull_sigma * std::sqrt(lambda_max);
  if (s.mean2d.x() + cull_radius < -0.5 || s.mean2d.x() - cull_radius > intr.width - 0.5 ||
      s.mean2d.y() + cull_radius < -0.5 || s.mean2d.y() - cull_radius > intr.height - 0.5)
    return std::nullopt;

  s.cov2d_inv << c / det, -b / det, -b / det, a / det;
  s.radius = opts.eval_sigma * std::sqrt(lambda_max);
  s.opacity = g.opacity;
  s.source = source;
  return s;
}

// Visible splats in front-to-back order. Depth ties break on the source index
// so the ordering, and with it every blend, is reproducible.
inline std::vector<Splat2D> project_all(const GaussianMap& map, const RigidTransform& t_cw,
                                        const CameraIntrinsics& intr, const RenderOptions& opts,
                                        const Eigen::Vector3d& cam_center) {
  const int n = static_cast<int>(map.size());
  std::vector<std::vector<Splat2D>> partial(std::max(1, std::min(opts.threads, n)));
  parallel_for(n, opts.threads, [&](int begin, int end, int worker) {
    auto& out = partial[worker];
    for (int i = begin; i < end; ++i) {
      auto s = project_gaussian(map[i], static_cast<uint32_t>(i), t_cw, intr, opts);
      if (!s) continue;
      const Eigen::Vector3d dir = (map[i].mean - cam_center).normalized();
      s->color = sh_to_color(map[i].sh, map.sh_degree(), dir);
      out.push_back(*s);
    }
  });
  std::vector<Splat2D> splats;
  for (auto& p : partial) splats.insert(splats.end(), p.begin(), p.end());
  std::sort(splats.begin(), splats.end(), [](const Splat2D& x, const Splat2D& y) {
    return x.depth != y.depth ? x.depth < y.depth : x.source < y.source;
  });
  return splats;
}

// Front-to-back alpha blend of one pixel over a candidate splat sequence.
// The square eval window test and the early transmittance exit are pixel-level
// decisions, so any candidate list that is a depth-ordered superset of the
// accepted splats produces bit-identical output.
template <typename IdRange>
inline Eigen::Vector3d blend_pixel(double px, double py, const IdRange& ids,
                                   const std::vector<Splat2D>& splats,
                                   const RenderOptions& opts,
                                   std::vector<BlendRecord>& records, uint32_t& count) {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double trans = 1.0;
  count = 0;
  for (const uint32_t id : ids) {
    const Splat2D& s = splats[id];
    const double dx = px - s.mean2d.x();
    const double dy = py - s.mean2d.y();
    if (std::abs(dx) > s.radius || std::abs(dy) > s.radius) continue;
    const double q = s.cov2d_inv(0, 0) * dx * dx + 2.0 * s.cov2d_inv(0, 1) * dx * dy +
                     s.cov2d_inv(1, 1) * dy * dy;
    const double alpha = std::min(s.opacity * std::exp(-0.5 * q), opts.alpha_clamp);
    records.push_back({id, alpha, trans});
    ++count;
    color += (alpha * trans) * s.color;
    trans *= 1.0 - alpha;
    if (trans < opts.min_transmittance) break;
  }
  return color;
}

namespace detail {

inline void finalize_pixel(RenderedImage& img, int x, int y, const Eigen::Vector3d& color,
                           const RenderOptions& opts) {
  const double y601 = luma_weights().dot(color);
  img.luma(x, y) = y601;
  img.log_intensity(x, y) = std::log(std::max(y601, opts.intensity_floor));
}

}  // namespace detail

// Tile-binned rasterization. Splats are binned by their eval-window box, each
// tile blends its pixels independently, and the per-tile record lists are
// concatenated in tile order so the output is identical for any thread count.
inline RenderedImage render(const GaussianMap& map, const RigidTransform& t_cw,
                            const CameraIntrinsics& intr, const RenderOptions& opts) {
  intr.validate();
  if (map.empty()) throw std::invalid_argument("render: empty map");

  RenderedImage img;
  img.log_intensity = ImageF64(intr.width, intr.height);
  img.luma = ImageF64(intr.width, intr.height);
  img.R_cw = t_cw.rotation;
  img.intrinsics = intr;
  img.options = opts;
  const Eigen::Vector3d cam_center = -(t_cw.rotation.transpose() * t_cw.translation);
  img.splats = project_all(map, t_cw, intr, opts, cam_center);

  const int ts = opts.tile_size;
  const int tiles_x = (intr.width + ts - 1) / ts;
  const int tiles_y = (intr.height + ts - 1) / ts;
  const int n_tiles = tiles_x * tiles_y;

  std::vector<std::vector<uint32_t>> tile_ids(n_tiles);
  for (uint32_t i = 0; i < img.splats.size(); ++i) {
    const Splat2D& s = img.splats[i];
    const int tx0 = std::max(0, static_cast<int>(std::floor((s.mean2d.x() - s.radius) / ts)));
    const int tx1 = std::min(tiles_x - 1, static_cast<int>(std::floor((s.mean2d.x() + s.radius) / ts)));
    const int ty0 = std::max(0, static_cast<int>(std::floor((s.mean2d.y() - s.radius) / ts)));
    const int ty1 = std::min(tiles_y - 1, static_cast<int>(std::floor((s.mean2d.y() + s.radius) / ts)));
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        tile_ids[ty * tiles_x + tx].push_back(i);
  }

  struct TileOut {
    std::vector<BlendRecord> records;
    std::vector<uint32_t> counts;  // per pixel of the tile, row-major
  };
  std::vector<TileOut> tiles(n_tiles);
  parallel_for(n_tiles, opts.threads, [&](int begin, int end, int) {
    for (int t = begin; t < end; ++t) {
      const int x0 = (t % tiles_x) * ts;
      const int y0 = (t / tiles_x) * ts;
      const int x1 = std::min(intr.width, x0 + ts);
      const int y1 = std::min(intr.height, y0 + ts);
      TileOut& out = tiles[t];
      out.counts.assign(static_cast<size_t>(x1 - x0) * (y1 - y0), 0);
      size_t k = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x, ++k) {
          const Eigen::Vector3d c =
              blend_pixel(x, y, tile_ids[t], img.splats, opts, out.records, out.counts[k]);
          detail::finalize_pixel(img, x, y, c, opts);
        }
      }
    }
  });

  img.record_start.assign(img.luma.size(), 0);
  img.record_count.assign(img.luma.size(), 0);
  size_t total = 0;
  for (const auto& t : tiles) total += t.records.size();
  img.records.reserve(total);
  uint32_t offset = 0;
  for (int t = 0; t < n_tiles; ++t) {
    const int x0 = (t % tiles_x) * ts;
    const int y0 = (t / tiles_x) * ts;
    const int x1 = std::min(intr.width, x0 + ts);
    const int y1 = std::min(intr.height, y0 + ts);
    size_t k = 0;
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x, ++k) {
        const size_t pix = static_cast<size_t>(y) * intr.width + x;
        img.record_start[pix] = offset;
        img.record_count[pix] = tiles[t].counts[k];
        offset += tiles[t].counts[k];
      }
    }
    img.records.insert(img.records.end(), tiles[t].records.begin(), tiles[t].records.end());
  }
  return img;
}

// Oracle path: no tiling, every pixel walks the full depth-sorted splat list.
// Must match render() exactly; kept in the library so integration tests can
// cross-check the binning on arbitrary scenes.
inline RenderedImage render_reference(const GaussianMap& map, const RigidTransform& t_cw,
                                      const CameraIntrinsics& intr, const RenderOptions& opts) {
  intr.validate();
  if (map.empty()) throw std::invalid_argument("render_reference: empty map");

  RenderedImage img;
  img.log_intensity = ImageF64(intr.width, intr.height);
  img.luma = ImageF64(intr.width, intr.height);
  img.R_cw = t_cw.rotation;
  img.intrinsics = intr;
  img.options = opts;
  const Eigen::Vector3d cam_center = -(t_cw.rotation.transpose() * t_cw.translation);
  RenderOptions seq = opts;
  seq.threads = 1;
  img.splats = project_all(map, t_cw, intr, seq, cam_center);

  std::vector<uint32_t> all(img.splats.size());
  std::iota(all.begin(), all.end(), 0u);
  img.record_start.assign(img.luma.size(), 0);
  img.record_count.assign(img.luma.size(), 0);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const size_t pix = static_cast<size_t>(y) * intr.width + x;
      img.record_start[pix] = static_cast<uint32_t>(img.records.size());
      const Eigen::Vector3d c =
          blend_pixel(x, y, all, img.splats, opts, img.records, img.record_count[pix]);
      detail::finalize_pixel(img, x, y, c, opts);
    }
  }
  return img;
}

struct RasterGradients {
  // Aligned with RenderedImage::splats; map indices come from Splat2D::source.
  std::vector<Eigen::Vector3d> point;     // dL/d(cam_point)
  std::vector<Eigen::Matrix3d> rotation;  // dL/d(R_cw) through this splat
};

// Reverse-mode pass of render(): loss_grad holds dL/d(log intensity) per
// pixel. Contributions replay each pixel's blend records back to front with a
// running suffix sum; per-splat 2D accumulators are then chained through the
// projection. Gradients flow through the projected mean and covariance only;
// the SH color is treated as constant over the pose update.
inline RasterGradients backward(const RenderedImage& img, const ImageF64& loss_grad) {
  if (!loss_grad.same_size(img.luma))
    throw std::invalid_argument("backward: loss gradient size mismatch");
  const RenderOptions& opts = img.options;
  const int w = img.intrinsics.width;
  const int h = img.intrinsics.height;
  const size_t n = img.splats.size();

  // Accumulation runs in fixed 16-row bands merged in band order, so the
  // floating-point summation tree depends only on the image geometry and the
  // gradients are bit-identical for every thread count.
  constexpr int band_rows = 16;
  const int n_bands = (h + band_rows - 1) / band_rows;
  std::vector<std::vector<Eigen::Vector2d>> amu(n_bands);
  std::vector<std::vector<Eigen::Matrix2d>> acov(n_bands);
  parallel_for(n_bands, opts.threads, [&](int b0, int b1, int) {
    for (int band = b0; band < b1; ++band) {
      auto& mu = amu[band];
      auto& cv = acov[band];
      mu.assign(n, Eigen::Vector2d::Zero());
      cv.assign(n, Eigen::Matrix2d::Zero());
      const int y_hi = std::min(h, (band + 1) * band_rows);
      for (int y = band * band_rows; y < y_hi; ++y) {
        for (int x = 0; x < w; ++x) {
          const double gl = loss_grad(x, y);
          if (gl == 0.0) continue;
          const double y601 = img.luma(x, y);
          if (y601 <= opts.intensity_floor) continue;  // log clamp is flat here
          const Eigen::Vector3d d_color = (gl / y601) * luma_weights();
          const size_t pix = static_cast<size_t>(y) * w + x;
          const uint32_t first = img.record_start[pix];
          Eigen::Vector3d suffix = Eigen::Vector3d::Zero();
          for (uint32_t k = img.record_count[pix]; k-- > 0;) {
            const BlendRecord& rec = img.records[first + k];
            const Splat2D& s = img.splats[rec.splat];
            const double dalpha =
                d_color.dot(rec.trans * s.color - suffix / (1.0 - rec.alpha));
            suffix += (rec.alpha * rec.trans) * s.color;
            if (rec.alpha >= opts.alpha_clamp) continue;  // clamped: flat
            const double d_gauss = dalpha * s.opacity;
            const double gauss = rec.alpha / s.opacity;
            const Eigen::Vector2d d(x - s.mean2d.x(), y - s.mean2d.y());
            const Eigen::Vector2d ad = s.cov2d_inv * d;
            mu[rec.splat] += (d_gauss * gauss) * ad;
            cv[rec.splat] += (0.5 * d_gauss * gauss) * (ad * ad.transpose());
          }
        }
      }
    }
  });
  for (int band = 1; band < n_bands; ++band) {
    for (size_t i = 0; i < n; ++i) {
      amu[0][i] += amu[band][i];
      acov[0][i] += acov[band][i];
    }
  }

  RasterGradients out;
  out.point.assign(n, Eigen::Vector3d::Zero());
  out.rotation.assign(n, Eigen::Matrix3d::Zero());
  const double fx = img.intrinsics.fx, fy = img.intrinsics.fy;
  parallel_for(static_cast<int>(n), opts.threads, [&](int begin, int end, int) {
    for (int i = begin; i < end; ++i) {
      const Splat2D& s = img.splats[i];
      const Eigen::Vector2d& g_mu = amu[0][i];
      const Eigen::Matrix2d& g_cov = acov[0][i];
      if (g_mu.isZero(0.0) && g_cov.isZero(0.0)) continue;
      const double z = s.cam_point.z();
      const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
      Eigen::Matrix<double, 2, 3> j;
      j << fx * iz, 0.0, -fx * s.cam_point.x() * iz2,
           0.0, fy * iz, -fy * s.cam_point.y() * iz2;

      // dL/dp via the mean, plus the covariance term through dJ/dp contracted
      // against P = 2 * g_cov * (J Sigma_cam); only four entries of J move.
      const Eigen::Matrix<double, 2, 3> b = j * s.cov_cam;
      const Eigen::Matrix<double, 2, 3> p2 = 2.0 * g_cov * b;
      Eigen::Vector3d g_p = j.transpose() * g_mu;
      g_p.x() += p2(0, 2) * (-fx * iz2);
      g_p.y() += p2(1, 2) * (-fy * iz2);
      g_p.z() += p2(0, 0) * (-fx * iz2) + p2(1, 1) * (-fy * iz2) +
                 p2(0, 2) * (2.0 * fx * s.cam_point.x() * iz3) +
                 p2(1, 2) * (2.0 * fy * s.cam_point.y() * iz3);
      out.point[i] = g_p;
      // Sigma_cam = R Sigma R^T gives dL/dR = 2 J^T g_cov J (R Sigma), and
      // R Sigma = Sigma_cam R for orthonormal R.
      out.rotation[i] = 2.0 * j.transpose() * g_cov * j * s.cov_cam * img.R_cw;
    }
  });
  return out;
}

}  // namespace evsplat
