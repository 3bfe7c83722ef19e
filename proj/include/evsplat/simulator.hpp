#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "evsplat/event_frontend.hpp"
#include "evsplat/gaussian_map.hpp"
#include "evsplat/rasterizer.hpp"
#include "evsplat/trajectory.hpp"

namespace evsplat {

enum class PathKind { Line, Orbit, Shake };

struct PathParams {
  PathKind kind = PathKind::Shake;
  double duration = 2.0;       // seconds, starting at t = 0
  double sample_rate = 1000.0; // trajectory sample density, Hz
  Eigen::Vector3d start_position = Eigen::Vector3d::Zero();  // camera center, world
  Eigen::Vector3d linear_velocity = Eigen::Vector3d(0.05, 0.0, 0.0);  // line, world m/s
  double orbit_radius = 0.05;
  double orbit_rate = 0.5;     // revolutions per second
  double shake_amp_translation = 0.02;  // meters
  double shake_amp_rotation = 0.03;     // radians
  double shake_max_frequency = 2.0;     // Hz
  uint64_t seed = 1;
};

// Smooth band-limited wobble: three fixed-ratio harmonics per channel with
// seeded random phases, normalized so the peak excursion equals amp.
class ShakeSignal {
 public:
  ShakeSignal(std::mt19937_64& rng, double amp, double max_freq) : amp_(amp) {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> fscale(0.4, 1.0);
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
      freq_[k] = max_freq * fscale(rng) * (k + 1) / 3.0;
      phase_[k] = phase(rng);
      weight_[k] = 1.0 / (k + 1);
      total += weight_[k];
    }
    for (int k = 0; k < 3; ++k) weight_[k] /= total;
  }

  double operator()(double t) const {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += weight_[k] * std::sin(2.0 * M_PI * freq_[k] * t + phase_[k]);
    return amp_ * s;
  }

 private:
  double amp_;
  double freq_[3], phase_[3], weight_[3];
};

// Camera path in front of a scene along +z; orientation stays aligned with
// the world axes except for the shake path's rotational wobble. Poses are
// built camera-to-world and stored inverted.
inline Trajectory make_camera_path(const PathParams& p) {
  const int n = std::max(2, static_cast<int>(std::floor(p.duration * p.sample_rate)) + 1);
  std::mt19937_64 rng(p.seed);
  std::vector<ShakeSignal> trans_sig, rot_sig;
  for (int a = 0; a < 3; ++a)
    trans_sig.emplace_back(rng, p.shake_amp_translation, p.shake_max_frequency);
  for (int a = 0; a < 3; ++a)
    rot_sig.emplace_back(rng, p.shake_amp_rotation, p.shake_max_frequency);

  std::vector<TrajectorySample> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double t = i * (p.duration / (n - 1));
    Eigen::Vector3d pos = p.start_position;
    Eigen::Matrix3d r_wc = Eigen::Matrix3d::Identity();
    switch (p.kind) {
      case PathKind::Line:
        pos += t * p.linear_velocity;
        break;
      case PathKind::Orbit: {
        const double a = 2.0 * M_PI * p.orbit_rate * t;
        pos += p.orbit_radius * Eigen::Vector3d(std::cos(a) - 1.0, std::sin(a), 0.0);
        break;
      }
      case PathKind::Shake: {
        pos += Eigen::Vector3d(trans_sig[0](t), trans_sig[1](t), trans_sig[2](t));
        r_wc = rodrigues(Eigen::Vector3d(rot_sig[0](t), rot_sig[1](t), rot_sig[2](t)));
        break;
      }
    }
    RigidTransform t_wc{r_wc, pos};
    samples.push_back({t, t_wc.inverse()});
  }
  return Trajectory(std::move(samples));
}

struct SimOptions {
  double contrast_threshold = 0.15;
  double frame_rate = 1000.0;  // differencing rate; keep >= 500 for fidelity
  double jitter_sigma = 0.0;   // per-event timestamp noise, seconds
  double spurious_rate = 0.0;  // uniform noise events per pixel per second
  uint64_t seed = 1;
  bool keep_frames = false;    // retain the per-frame log-intensity cache
};

struct SimulatedEvents {
  std::vector<Event> events;
  int frames_rendered = 0;
  std::vector<ImageF64> frames;      // only when keep_frames is set
  std::vector<double> frame_times;
};

// Ideal event camera by dense frame differencing. Every pixel carries a
// persistent reference log intensity; when a new frame moves the pixel by k
// full thresholds, k events fire with timestamps linearly interpolated at the
// successive crossing levels inside the frame interval, and the reference
// advances by exactly k thresholds (sub-threshold residue persists). Events
// are globally sorted by (t, y, x); noise, when enabled, is injected after
// the physics and re-sorted.
inline SimulatedEvents simulate_events(const GaussianMap& map, const Trajectory& traj,
                                       const CameraIntrinsics& intr, const SimOptions& sim,
                                       const RenderOptions& render_opts = {}) {
  if (sim.contrast_threshold <= 0.0)
    throw std::invalid_argument("simulate_events: contrast threshold must be positive");
  const double duration = traj.end_time() - traj.start_time();
  const int frames = static_cast<int>(std::floor(duration * sim.frame_rate));
  if (frames < 2) throw std::invalid_argument("simulate_events: trajectory too short");

  const double c = sim.contrast_threshold;
  const double dt = 1.0 / sim.frame_rate;
  const double t0 = traj.start_time();

  SimulatedEvents out;
  out.frames_rendered = frames;
  ImageF64 log_prev = render(map, traj.pose_at(t0), intr, render_opts).log_intensity;
  ImageF64 log_ref = log_prev;
  if (sim.keep_frames) {
    out.frames.push_back(log_prev);
    out.frame_times.push_back(t0);
  }

  for (int k = 1; k < frames; ++k) {
    const double tk = t0 + k * dt;
    ImageF64 log_k = render(map, traj.pose_at(tk), intr, render_opts).log_intensity;
    for (int y = 0; y < intr.height; ++y) {
      for (int x = 0; x < intr.width; ++x) {
        const double diff = log_k(x, y) - log_ref(x, y);
        // Quantization guard: a ramp of exactly n thresholds must yield n.
        const int n = static_cast<int>(std::floor(std::abs(diff) / c + 1e-9));
        if (n == 0) continue;
        const int8_t pol = diff > 0.0 ? 1 : -1;
        const double slope = log_k(x, y) - log_prev(x, y);
        for (int i = 1; i <= n; ++i) {
          const double target = log_ref(x, y) + pol * i * c;
          double s = slope != 0.0 ? (target - log_prev(x, y)) / slope : 1.0;
          s = std::clamp(s, 0.0, 1.0);
          out.events.push_back({tk - dt + s * dt, static_cast<uint16_t>(x),
                                static_cast<uint16_t>(y), pol});
        }
        log_ref(x, y) += pol * n * c;
      }
    }
    log_prev = std::move(log_k);
    if (sim.keep_frames) {
      out.frames.push_back(log_prev);
      out.frame_times.push_back(tk);
    }
  }

  std::mt19937_64 rng(sim.seed);
  const double t_end = t0 + (frames - 1) * dt;
  if (sim.jitter_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sim.jitter_sigma);
    for (Event& e : out.events) e.t = std::clamp(e.t + noise(rng), t0, t_end);
  }
  if (sim.spurious_rate > 0.0) {
    const double expected =
        sim.spurious_rate * intr.width * intr.height * (t_end - t0);
    std::poisson_distribution<long> count_dist(expected);
    std::uniform_real_distribution<double> ut(t0, t_end);
    std::uniform_int_distribution<int> ux(0, intr.width - 1), uy(0, intr.height - 1);
    std::uniform_int_distribution<int> up(0, 1);
    const long extra = count_dist(rng);
    for (long i = 0; i < extra; ++i)
      out.events.push_back({ut(rng), static_cast<uint16_t>(ux(rng)),
                            static_cast<uint16_t>(uy(rng)),
                            static_cast<int8_t>(up(rng) ? 1 : -1)});
  }
  std::stable_sort(out.events.begin(), out.events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return out;
}

}  // namespace evsplat
