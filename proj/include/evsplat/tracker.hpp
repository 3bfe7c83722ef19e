#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "evsplat/event_frontend.hpp"
#include "evsplat/gaussian_map.hpp"
#include "evsplat/image_ops.hpp"
#include "evsplat/jacobians.hpp"
#include "evsplat/motion_model.hpp"
#include "evsplat/rasterizer.hpp"
#include "evsplat/trajectory.hpp"

namespace evsplat {

struct TrackerConfig {
  int pyramid_levels = 3;       // 0 disables the coarse stage entirely
  double blur_sigma = 1.5;      // pixels, at the working resolution
  double mask_threshold = 1.0;  // |event count| that marks a pixel active
  int mask_dilation = 4;        // pixels, at full resolution
  double lr_translation = 2e-3; // meters per normalized step
  double lr_rotation = 2e-3;    // radians
  double lr_linear = 2e-2;      // m/s
  double lr_angular = 5e-2;     // rad/s
  double level_lr_scale = 2.0;  // learning-rate multiplier per pyramid level
  int max_iterations = 60;      // per stage and level
  int slope_window = 5;         // iterations averaged by the stop criterion
  double slope_epsilon = 1e-4;  // fraction of the stage's initial loss
  double min_lr_factor = 1e-3;  // stop once rejection halving reaches this
  double bootstrap_spread_px = 0.3;  // probe velocities below this blur spread
  double probe_spread_px = 1.5;      // image-plane spread a probe aims for
  double probe_max_linear = 1.0;     // m/s ceiling on probe candidates
  double probe_max_angular = 2.0;    // rad/s ceiling on probe candidates
  // Velocity-only refinement after the probe. The translation/rotation flow
  // valley is long and shallow, so this stage gets a larger budget, a stricter
  // stop and an angular rate matched to the linear one in image-flow units at
  // a few meters depth; the probe's axis-aligned seed otherwise leaks into
  // the rotation rate.
  int bootstrap_iterations = 240;
  double bootstrap_slope_epsilon = 1e-6;
  double bootstrap_lr_angular = 1e-2;
  // A keyframe that still ends above this loss is re-run through the whole
  // staged pipeline from where it landed: the rejection halving anneals the
  // step factor, and when that happens halfway down a valley only a fresh
  // factor gets the descent moving again. Zero disables restarts.
  double restart_loss = 0.015;
  int max_restarts = 2;
  RenderOptions render;
};

struct LossResult {
  double loss = 0.0;
  ImageF64 grad;  // dL/d(rendered value), zero outside the mask
  bool degenerate = false;
};

// Residual between unit-normalized images over the masked support:
// L = sum_mask (r/|r| - e/|e|)^2. Invariant to any positive rescaling of
// either side, which is what cancels the unknown contrast threshold. When a
// side has no energy under the mask there is no direction to compare; the
// loss pins to the maximum 2.0 with zero gradient.
inline LossResult normalized_loss(const ImageF64& rendered, const ImageF64& events,
                                  const ImageU8& mask) {
  if (!rendered.same_size(events) || rendered.width() != mask.width() ||
      rendered.height() != mask.height())
    throw std::invalid_argument("normalized_loss: size mismatch");
  LossResult out;
  out.grad = ImageF64(rendered.width(), rendered.height(), 0.0);

  double nr2 = 0.0, ne2 = 0.0;
  for (size_t i = 0; i < rendered.size(); ++i) {
    if (!mask[i]) continue;
    nr2 += rendered[i] * rendered[i];
    ne2 += events[i] * events[i];
  }
  const double nr = std::sqrt(nr2), ne = std::sqrt(ne2);
  if (nr < 1e-12 || ne < 1e-12) {
    out.loss = 2.0;
    out.degenerate = true;
    return out;
  }

  double dot = 0.0, loss = 0.0;
  for (size_t i = 0; i < rendered.size(); ++i) {
    if (!mask[i]) continue;
    const double u = rendered[i] / nr, w = events[i] / ne;
    dot += u * w;
    loss += (u - w) * (u - w);
  }
  out.loss = loss;
  // d/dr_i of the normalized residual; the projection term dot*u_i is what
  // makes the gradient orthogonal to radial rescaling of r.
  for (size_t i = 0; i < rendered.size(); ++i) {
    if (!mask[i]) continue;
    const double u = rendered[i] / nr, w = events[i] / ne;
    out.grad[i] = (2.0 / nr) * (dot * u - w);
  }
  return out;
}

inline ImageU8 event_mask(const ImageF64& counts, double threshold, int dilation) {
  ImageU8 mask(counts.width(), counts.height(), 0);
  for (size_t i = 0; i < counts.size(); ++i)
    if (std::abs(counts[i]) >= threshold) mask[i] = 1;
  return dilate_square(mask, dilation);
}

// Event side of one pyramid level: optional polarity rectification, blur at
// full resolution with a level-scaled sigma, then block averaging. At level 0
// this collapses to the same single blur the rendered side gets, so a
// rendered difference image fed back in as its own target sits at an exact
// stationary point.
inline ImageF64 preprocess_event_image(const ImageF64& counts, bool polarity_free, int level,
                                       double blur_sigma) {
  const int factor = 1 << level;
  ImageF64 img = polarity_free ? image_abs(counts) : counts;
  img = gaussian_blur(img, blur_sigma * factor);
  return downsample_avg(img, factor);
}

struct DeltaRender {
  ImageF64 delta;  // log intensity at the window end minus at the window start
  RenderedImage first, last;
};

inline DeltaRender render_intensity_change(const GaussianMap& map, const MotionState& state,
                                           double delta_tau, const CameraIntrinsics& intr,
                                           const RenderOptions& opts) {
  const auto [t_first, t_last] = boundary_poses(state, delta_tau);
  DeltaRender out;
  out.first = render(map, t_first, intr, opts);
  out.last = render(map, t_last, intr, opts);
  out.delta = ImageF64(intr.width, intr.height);
  for (size_t i = 0; i < out.delta.size(); ++i)
    out.delta[i] = out.last.log_intensity[i] - out.first.log_intensity[i];
  return out;
}

namespace detail {

// Immutable per-stage inputs: preprocessed event target, mask at the stage's
// resolution, scaled intrinsics.
struct StageData {
  ImageF64 target;
  ImageU8 mask;
  CameraIntrinsics intr;
  int level = 0;
  bool polarity_free = false;
  bool mask_empty = true;
};

inline StageData make_stage_data(const EventKeyframe& kf, const CameraIntrinsics& intr_full,
                                 const TrackerConfig& cfg, int level, bool polarity_free) {
  StageData sd;
  sd.level = level;
  sd.polarity_free = polarity_free;
  sd.intr = intr_full.scaled(level);
  sd.target = preprocess_event_image(kf.delta, polarity_free, level, cfg.blur_sigma);
  sd.mask = downsample_any(event_mask(kf.delta, cfg.mask_threshold, cfg.mask_dilation),
                           1 << level);
  for (size_t i = 0; i < sd.mask.size(); ++i)
    if (sd.mask[i]) { sd.mask_empty = false; break; }
  return sd;
}

struct StageEval {
  double loss = 0.0;
  bool degenerate = false;
  DeltaRender dr;
  ImageF64 loss_grad;  // dL/d(blurred rendered difference)
};

inline StageEval stage_forward(const GaussianMap& map, const MotionState& state,
                               double delta_tau, const StageData& sd, const TrackerConfig& cfg) {
  StageEval ev;
  ev.dr = render_intensity_change(map, state, delta_tau, sd.intr, cfg.render);
  const ImageF64 rectified = sd.polarity_free ? image_abs(ev.dr.delta) : ev.dr.delta;
  const ImageF64 blurred = gaussian_blur(rectified, cfg.blur_sigma);
  LossResult lr = normalized_loss(blurred, sd.target, sd.mask);
  ev.loss = lr.loss;
  ev.degenerate = lr.degenerate;
  ev.loss_grad = std::move(lr.grad);
  return ev;
}

// Chains the image-space loss gradient back to the 12-dim state gradient
// [delta_t, delta_theta, delta_v, delta_omega] at zero increment. The blur is
// symmetric under zero padding so its transpose is the blur itself; the
// polarity-free rectifier contributes sign(delta), flat at zero. The two
// boundary renders enter the difference with opposite signs.
inline Vector12d stage_gradient(const GaussianMap& map, const StageEval& ev,
                                const MotionState& state, double delta_tau,
                                const StageData& sd, const TrackerConfig& cfg) {
  (void)map;
  ImageF64 gd = gaussian_blur(ev.loss_grad, cfg.blur_sigma);
  if (sd.polarity_free) {
    for (size_t i = 0; i < gd.size(); ++i) {
      const double d = ev.dr.delta[i];
      gd[i] = d > 0.0 ? gd[i] : (d < 0.0 ? -gd[i] : 0.0);
    }
  }
  ImageF64 gd_neg(gd.width(), gd.height());
  for (size_t i = 0; i < gd.size(); ++i) gd_neg[i] = -gd[i];

  const RasterGradients g_last = backward(ev.dr.last, gd);
  const RasterGradients g_first = backward(ev.dr.first, gd_neg);
  return full_gradient(g_last, ev.dr.last.splats, ev.dr.last.R_cw,
                       velocity_factor(state, delta_tau, +1.0), delta_tau, +1.0) +
         full_gradient(g_first, ev.dr.first.splats, ev.dr.first.R_cw,
                       velocity_factor(state, delta_tau, -1.0), delta_tau, -1.0);
}

}  // namespace detail

struct StageTrace {
  int level = 0;
  bool polarity_free = false;
  bool optimize_pose = true;
  bool optimize_velocity = false;
  bool skipped = false;  // empty mask, non-positive window, or degenerate start
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  int rejections = 0;
  bool converged = false;
};

// First-order descent with per-block normalized steps: each of the four
// 3-vectors (translation, rotation, linear and angular velocity) moves by its
// own learning rate along its own unit gradient direction, which makes the
// scheme indifferent to the wildly different natural scales of the blocks.
// A candidate that fails to keep the loss monotone is rejected and the common
// step factor is halved, giving geometric refinement near the optimum. The
// stage stops when the mean decrease over the last slope_window accepted
// steps drops below slope_epsilon times the initial loss, when the step
// factor underflows min_lr_factor, or when every block gradient vanishes.
inline MotionState run_stage(const GaussianMap& map, const MotionState& start,
                             const EventKeyframe& kf, const detail::StageData& sd,
                             const TrackerConfig& cfg, bool optimize_pose,
                             bool optimize_velocity, StageTrace& trace) {
  trace.level = sd.level;
  trace.polarity_free = sd.polarity_free;
  trace.optimize_pose = optimize_pose;
  trace.optimize_velocity = optimize_velocity;
  if (sd.mask_empty || kf.delta_tau <= 0.0) {
    trace.skipped = true;
    return start;
  }

  MotionState state = start;
  detail::StageEval ev = detail::stage_forward(map, state, kf.delta_tau, sd, cfg);
  trace.initial_loss = trace.final_loss = ev.loss;
  if (ev.degenerate) {
    trace.skipped = true;
    return start;
  }
  Vector12d grad = detail::stage_gradient(map, ev, state, kf.delta_tau, sd, cfg);

  const double lscale = std::pow(cfg.level_lr_scale, sd.level);
  double lr = 1.0;
  double cur_loss = ev.loss;
  std::vector<double> history{cur_loss};

  const auto block_step = [](const Eigen::Vector3d& g, double rate) -> Eigen::Vector3d {
    const double n = g.norm();
    return n > 1e-14 ? Eigen::Vector3d(-(rate / n) * g) : Eigen::Vector3d::Zero();
  };

  for (int it = 0; it < cfg.max_iterations; ++it) {
    PoseIncrement inc;
    if (optimize_pose) {
      inc.delta_t = block_step(grad.segment<3>(0), lr * lscale * cfg.lr_translation);
      inc.delta_theta = block_step(grad.segment<3>(3), lr * lscale * cfg.lr_rotation);
    }
    Eigen::Vector3d dv = Eigen::Vector3d::Zero(), dw = Eigen::Vector3d::Zero();
    if (optimize_velocity) {
      dv = block_step(grad.segment<3>(6), lr * lscale * cfg.lr_linear);
      dw = block_step(grad.segment<3>(9), lr * lscale * cfg.lr_angular);
    }
    if (inc.delta_t.isZero(0.0) && inc.delta_theta.isZero(0.0) && dv.isZero(0.0) &&
        dw.isZero(0.0)) {
      trace.converged = true;
      break;
    }

    MotionState cand = apply_increment(state, inc);
    cand.linear += dv;
    cand.angular += dw;
    detail::StageEval cev = detail::stage_forward(map, cand, kf.delta_tau, sd, cfg);
    ++trace.iterations;
    if (!cev.degenerate && cev.loss <= cur_loss) {
      state = cand;
      cur_loss = cev.loss;
      grad = detail::stage_gradient(map, cev, state, kf.delta_tau, sd, cfg);
      // Only accepted steps enter the slope history; a burst of rejections
      // must shrink the step factor, not masquerade as a flat loss curve.
      history.push_back(cur_loss);
      if (static_cast<int>(history.size()) > cfg.slope_window) {
        const double drop = history[history.size() - 1 - cfg.slope_window] - history.back();
        if (drop / cfg.slope_window <
            cfg.slope_epsilon * std::max(trace.initial_loss, 1e-12)) {
          trace.converged = true;
          break;
        }
      }
    } else {
      ++trace.rejections;
      lr *= 0.5;
      if (lr < cfg.min_lr_factor) {
        trace.converged = true;
        break;
      }
    }
  }
  trace.final_loss = cur_loss;
  return state;
}

struct KeyframeReport {
  size_t index = 0;
  double tau = 0.0;
  double delta_tau = 0.0;
  size_t n_events = 0;
  bool skipped = false;      // no usable events; the prediction was emitted
  bool divergent = false;    // optimization lost to the prediction baseline
  bool bootstrapped = false; // velocity seeded by the axis probe
  double baseline_loss = 0.0;  // signed level-0 loss at the predicted state
  double final_loss = 0.0;
  std::vector<StageTrace> stages;
  MotionState state;  // the state actually emitted
};

// One keyframe: polarity-free coarse alignment down the pyramid with frozen
// velocity, then the signed full-resolution stage over pose and velocity
// jointly. Falls back to the motion-model prediction whenever the optimized
// loss ends up above the loss the prediction already had.
inline KeyframeReport track_keyframe(const GaussianMap& map, const MotionState& predicted,
                                     const EventKeyframe& kf, const TrackerConfig& cfg,
                                     const CameraIntrinsics& intr) {
  KeyframeReport rep;
  rep.tau = kf.tau;
  rep.delta_tau = kf.delta_tau;
  rep.n_events = kf.n_events;
  rep.state = predicted;

  const detail::StageData fine_sd = detail::make_stage_data(kf, intr, cfg, 0, false);
  if (fine_sd.mask_empty || kf.delta_tau <= 0.0) {
    rep.skipped = true;
    return rep;
  }

  detail::StageEval base = detail::stage_forward(map, predicted, kf.delta_tau, fine_sd, cfg);
  rep.baseline_loss = base.loss;
  MotionState state = predicted;

  // The rendered difference vanishes when the boundary poses coincide, which
  // leaves every stage without a gradient. If the predicted motion spreads
  // the window by less than a fraction of a pixel, probe one axis-aligned
  // velocity per sign and direction at a spread the loss can see, and keep
  // the best probe as the seed.
  double z_ref = 1.0;
  if (!base.dr.last.splats.empty()) {
    std::vector<double> depths;
    depths.reserve(base.dr.last.splats.size());
    for (const auto& s : base.dr.last.splats) depths.push_back(s.depth);
    const size_t mid = depths.size() / 2;
    std::nth_element(depths.begin(), depths.begin() + mid, depths.end());
    z_ref = std::max(depths[mid], intr.near_clip);
  }
  const double f = std::max(intr.fx, intr.fy);
  const double spread_px =
      f * kf.delta_tau * (state.linear.norm() / z_ref + state.angular.norm());
  if (spread_px < cfg.bootstrap_spread_px) {
    // On a fixed-count window the target spread implies a speed that scales
    // with 1/delta_tau; an event burst can make that window so short that the
    // implied probe velocity becomes physically absurd and, once kept, throws
    // the motion prediction far off the map. Clamp the candidates instead.
    const double vmag =
        std::min(cfg.probe_spread_px * z_ref / (f * kf.delta_tau), cfg.probe_max_linear);
    const double wmag =
        std::min(cfg.probe_spread_px / (f * kf.delta_tau), cfg.probe_max_angular);
    double best = base.loss;
    MotionState best_state = state;
    // The rendered edge thickness tracks the speed, so the loss is sharply
    // sensitive to the magnitude along a well-chosen axis: sweep a few
    // magnitude octaves per axis so the seed starts near the right speed.
    for (int axis = 0; axis < 3; ++axis) {
      for (double sign : {1.0, -1.0}) {
        for (bool angular : {false, true}) {
          for (double scale : {1.0, 0.5, 0.25}) {
            MotionState probe = state;
            if (angular)
              probe.angular += sign * scale * wmag * Eigen::Vector3d::Unit(axis);
            else
              probe.linear += sign * scale * vmag * Eigen::Vector3d::Unit(axis);
            const double l =
                detail::stage_forward(map, probe, kf.delta_tau, fine_sd, cfg).loss;
            if (l < best) {
              best = l;
              best_state = probe;
            }
          }
        }
      }
    }
    if (best < base.loss) {
      state = best_state;
      rep.bootstrapped = true;
      // The probe only picks an axis-aligned speed. Refine the velocity alone,
      // pose frozen, before the staged optimization: the prior pose is the
      // best-trusted part of the state here, and a joint descent from a crude
      // velocity guess would drag it along the translation/rotation flow
      // ambiguity of near-planar scenes.
      TrackerConfig boot_cfg = cfg;
      boot_cfg.max_iterations = cfg.bootstrap_iterations;
      boot_cfg.slope_epsilon = cfg.bootstrap_slope_epsilon;
      boot_cfg.lr_angular = cfg.bootstrap_lr_angular;
      StageTrace boot;
      state = run_stage(map, state, kf, fine_sd, boot_cfg, false, true, boot);
      rep.stages.push_back(boot);
    }
  }

  const auto staged_round = [&](const MotionState& from) {
    MotionState s = from;
    for (int level = cfg.pyramid_levels - 1; level >= 0; --level) {
      const detail::StageData sd = detail::make_stage_data(kf, intr, cfg, level, true);
      StageTrace tr;
      s = run_stage(map, s, kf, sd, cfg, true, false, tr);
      rep.stages.push_back(tr);
    }
    StageTrace fine;
    s = run_stage(map, s, kf, fine_sd, cfg, true, true, fine);
    rep.stages.push_back(fine);
    const double fl =
        fine.skipped ? detail::stage_forward(map, s, kf.delta_tau, fine_sd, cfg).loss
                     : fine.final_loss;
    return std::make_pair(s, fl);
  };

  std::tie(state, rep.final_loss) = staged_round(state);
  for (int r = 0;
       cfg.restart_loss > 0.0 && r < cfg.max_restarts && rep.final_loss > cfg.restart_loss;
       ++r) {
    const auto [s, fl] = staged_round(state);
    if (fl >= rep.final_loss) break;  // a fruitless restart keeps the earlier state
    state = s;
    rep.final_loss = fl;
  }

  if (rep.final_loss > rep.baseline_loss) {
    rep.divergent = true;  // the prediction explains the window better
    rep.state = predicted;
  } else {
    rep.state = state;
  }
  return rep;
}

struct TrackResult {
  Trajectory trajectory;  // estimated T_cw at each keyframe midpoint
  std::vector<KeyframeReport> reports;
  size_t divergent_count = 0;
  size_t skipped_count = 0;
};

// Runs the tracker over an event stream cut into fixed-count keyframes. The
// state is extrapolated by the constant-velocity model between keyframe
// midpoints; a keyframe that is skipped or diverges emits that extrapolation
// and keeps its velocity.
inline TrackResult track_sequence(const GaussianMap& map, const MotionState& initial,
                                  std::span<const Event> events, size_t events_per_keyframe,
                                  const TrackerConfig& cfg, const CameraIntrinsics& intr,
                                  const std::function<void(const KeyframeReport&)>& on_keyframe = {}) {
  const std::vector<EventKeyframe> kfs =
      make_keyframes(events, events_per_keyframe, intr.width, intr.height);
  TrackResult out;
  MotionState state = initial;
  double prev_tau = std::numeric_limits<double>::quiet_NaN();
  for (size_t i = 0; i < kfs.size(); ++i) {
    const double dt = std::isnan(prev_tau) ? 0.0 : kfs[i].tau - prev_tau;
    const MotionState predicted = predict_next(state, dt);
    KeyframeReport rep = track_keyframe(map, predicted, kfs[i], cfg, intr);
    rep.index = i;
    state = rep.state;
    out.trajectory.push(kfs[i].tau, state.t_cw);
    out.divergent_count += rep.divergent ? 1 : 0;
    out.skipped_count += rep.skipped ? 1 : 0;
    if (on_keyframe) on_keyframe(rep);
    out.reports.push_back(std::move(rep));
    prev_tau = kfs[i].tau;
  }
  return out;
}

}  // namespace evsplat
