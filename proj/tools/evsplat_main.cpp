// Command-line front end: track / simulate / evaluate / render subcommands
// over the evsplat library. Every run with --threads 1 and a fixed --seed is
// byte-reproducible; all file formats are plain text except the PLY maps and
// image dumps.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Geometry>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "evsplat/evsplat.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;       // usage, input, or I/O problems
constexpr int kExitDivergence = 2;  // tracking finished but flagged keyframes

struct IntrinsicsArgs {
  int width = 128, height = 96;
  double fx = 160.0, fy = 160.0;
  double cx = -1.0, cy = -1.0;  // negative: center of the pixel grid
  double near_clip = 0.05;

  evsplat::CameraIntrinsics build() const {
    evsplat::CameraIntrinsics intr;
    intr.width = width;
    intr.height = height;
    intr.fx = fx;
    intr.fy = fy;
    intr.cx = cx >= 0.0 ? cx : (width - 1) * 0.5;
    intr.cy = cy >= 0.0 ? cy : (height - 1) * 0.5;
    intr.near_clip = near_clip;
    intr.validate();
    return intr;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--width", width, "sensor width, pixels");
    cmd->add_option("--height", height, "sensor height, pixels");
    cmd->add_option("--fx", fx, "focal length x, pixels");
    cmd->add_option("--fy", fy, "focal length y, pixels");
    cmd->add_option("--cx", cx, "principal point x (default: grid center)");
    cmd->add_option("--cy", cy, "principal point y (default: grid center)");
    cmd->add_option("--near-clip", near_clip, "near clipping depth, meters");
  }
};

struct SceneArgs {
  std::string map_path;
  std::string scene;  // "wall" or "cloud"; empty means --map is required
  int nx = 40, ny = 30, count = 300;
  double spacing = 0.05, depth = 2.0, sigma = 0.015, opacity = 0.8;
  double position_jitter = 0.0, color_jitter = 0.0, rest_amplitude = 0.0;
  int sh_degree = 0;
  uint64_t seed = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--map", map_path, "gaussian map (.ply, binary little endian)");
    cmd->add_option("--scene", scene, "synthetic scene instead of --map: wall|cloud");
    cmd->add_option("--scene-nx", nx, "wall grid width");
    cmd->add_option("--scene-ny", ny, "wall grid height");
    cmd->add_option("--scene-count", count, "cloud gaussian count");
    cmd->add_option("--scene-spacing", spacing, "wall grid pitch, meters");
    cmd->add_option("--scene-depth", depth, "wall plane depth, meters");
    cmd->add_option("--scene-sigma", sigma, "gaussian stddev, meters");
    cmd->add_option("--scene-opacity", opacity, "gaussian opacity");
    cmd->add_option("--scene-position-jitter", position_jitter, "wall position jitter, meters");
    cmd->add_option("--scene-color-jitter", color_jitter, "wall color jitter");
    cmd->add_option("--scene-sh-degree", sh_degree, "spherical harmonics degree, 0..3");
    cmd->add_option("--scene-rest-amplitude", rest_amplitude, "higher-band SH amplitude");
    cmd->add_option("--scene-seed", seed, "synthetic scene seed");
  }

  evsplat::GaussianMap load() const {
    if (!map_path.empty()) return evsplat::load_ply(map_path);
    if (scene.empty()) throw std::runtime_error("either --map or --scene is required");
    evsplat::SceneSpec spec;
    if (scene == "wall")
      spec.pattern = evsplat::ScenePattern::Wall;
    else if (scene == "cloud")
      spec.pattern = evsplat::ScenePattern::Cloud;
    else
      throw std::runtime_error("unknown --scene '" + scene + "' (wall|cloud)");
    spec.nx = nx;
    spec.ny = ny;
    spec.count = count;
    spec.spacing = spacing;
    spec.depth = depth;
    spec.sigma = sigma;
    spec.opacity = opacity;
    spec.position_jitter = position_jitter;
    spec.color_jitter = color_jitter;
    spec.sh_degree = sh_degree;
    spec.rest_amplitude = rest_amplitude;
    spec.seed = seed;
    return evsplat::make_synthetic_map(spec);
  }
};

evsplat::RigidTransform pose_from_wc_fields(const std::vector<double>& v) {
  if (v.size() != 7)
    throw std::runtime_error("pose needs 7 values: tx ty tz qx qy qz qw (camera-to-world)");
  Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
  q.normalize();
  const evsplat::RigidTransform t_wc{q.toRotationMatrix(), Eigen::Vector3d(v[0], v[1], v[2])};
  return t_wc.inverse();
}

json stage_json(const evsplat::StageTrace& s) {
  return json{{"level", s.level},
              {"polarity_free", s.polarity_free},
              {"pose", s.optimize_pose},
              {"velocity", s.optimize_velocity},
              {"skipped", s.skipped},
              {"initial_loss", s.initial_loss},
              {"final_loss", s.final_loss},
              {"iterations", s.iterations},
              {"rejections", s.rejections},
              {"converged", s.converged}};
}

// ---------------------------------------------------------------- track ----

struct TrackArgs {
  IntrinsicsArgs intr;
  SceneArgs scene;
  std::string events_path;
  std::string output_dir;
  std::string initial_gt;
  std::vector<double> initial_pose;      // tx ty tz qx qy qz qw, camera-to-world
  std::vector<double> initial_velocity;  // vx vy vz wx wy wz, camera frame
  size_t events_per_keyframe = 15000;
  size_t max_keyframes = 0;
  double sequence_fraction = 1.0;
  int threads = 1;
  uint64_t seed = 1;
  bool dump_images = false;
  evsplat::TrackerConfig cfg;
};

void attach_track(CLI::App* cmd, TrackArgs& a) {
  a.intr.attach(cmd);
  a.scene.attach(cmd);
  cmd->add_option("--events", a.events_path, "event stream (text, optional .gz)")->required();
  cmd->add_option("--output", a.output_dir, "output directory")->required();
  cmd->add_option("--initial-gt", a.initial_gt,
                  "trajectory file supplying the pose at the first keyframe");
  cmd->add_option("--initial-pose", a.initial_pose,
                  "initial camera-to-world pose: tx ty tz qx qy qz qw")
      ->expected(7);
  cmd->add_option("--initial-velocity", a.initial_velocity,
                  "initial camera-frame velocity: vx vy vz wx wy wz")
      ->expected(6);
  cmd->add_option("--events-per-keyframe", a.events_per_keyframe, "window size N");
  cmd->add_option("--max-keyframes", a.max_keyframes, "stop after this many keyframes (0: all)");
  cmd->add_option("--sequence-fraction", a.sequence_fraction,
                  "use only this fraction of the event-time span");
  cmd->add_option("--threads", a.threads, "worker threads (1: fully deterministic)");
  cmd->add_option("--seed", a.seed, "random seed (reserved; tracking itself is deterministic)");
  cmd->add_flag("--dump-images", a.dump_images, "write per-keyframe diagnostic images");
  cmd->add_option("--pyramid-levels", a.cfg.pyramid_levels, "coarse stage levels (0 disables)");
  cmd->add_option("--blur-sigma", a.cfg.blur_sigma, "gaussian blur sigma, pixels");
  cmd->add_option("--mask-threshold", a.cfg.mask_threshold, "event-count mask threshold");
  cmd->add_option("--mask-dilation", a.cfg.mask_dilation, "mask dilation radius, pixels");
  cmd->add_option("--lr-translation", a.cfg.lr_translation, "translation step, meters");
  cmd->add_option("--lr-rotation", a.cfg.lr_rotation, "rotation step, radians");
  cmd->add_option("--lr-linear", a.cfg.lr_linear, "linear velocity step, m/s");
  cmd->add_option("--lr-angular", a.cfg.lr_angular, "angular velocity step, rad/s");
  cmd->add_option("--max-iterations", a.cfg.max_iterations, "iterations per stage");
  cmd->add_option("--slope-window", a.cfg.slope_window, "loss-slope window, iterations");
  cmd->add_option("--slope-epsilon", a.cfg.slope_epsilon, "loss-slope stop fraction");
}

int run_track(TrackArgs& a) {
  const evsplat::CameraIntrinsics intr = a.intr.build();
  const evsplat::GaussianMap map = a.scene.load();
  std::vector<evsplat::Event> events =
      evsplat::parse_events(a.events_path, intr.width, intr.height);
  if (events.empty()) throw std::runtime_error("track: event stream is empty");

  if (a.sequence_fraction < 1.0) {
    const double t0 = events.front().t;
    const double cut = t0 + a.sequence_fraction * (events.back().t - t0);
    size_t keep = 0;
    while (keep < events.size() && events[keep].t <= cut) ++keep;
    events.resize(keep);
  }
  if (a.max_keyframes > 0) {
    const size_t cap = a.max_keyframes * a.events_per_keyframe;
    if (events.size() > cap) events.resize(cap);
  }

  evsplat::MotionState initial;
  if (!a.initial_pose.empty()) {
    initial.t_cw = pose_from_wc_fields(a.initial_pose);
  } else if (!a.initial_gt.empty()) {
    const evsplat::Trajectory gt = evsplat::load_trajectory_tum(a.initial_gt);
    if (events.size() < a.events_per_keyframe)
      throw std::runtime_error("track: fewer events than one keyframe window");
    const double tau0 =
        0.5 * (events.front().t + events[a.events_per_keyframe - 1].t);
    initial.t_cw = gt.pose_at(tau0);
  } else {
    throw std::runtime_error("track: need --initial-pose or --initial-gt");
  }
  if (!a.initial_velocity.empty()) {
    initial.linear = Eigen::Vector3d(a.initial_velocity[0], a.initial_velocity[1],
                                     a.initial_velocity[2]);
    initial.angular = Eigen::Vector3d(a.initial_velocity[3], a.initial_velocity[4],
                                      a.initial_velocity[5]);
  }

  a.cfg.render.threads = a.threads;
  fs::create_directories(a.output_dir);
  if (a.dump_images) fs::create_directories(fs::path(a.output_dir) / "images");

  std::ofstream diag(fs::path(a.output_dir) / "diagnostics.jsonl");
  if (!diag) throw std::runtime_error("track: cannot write diagnostics.jsonl");

  const auto on_keyframe = [&](const evsplat::KeyframeReport& rep) {
    const evsplat::RigidTransform t_wc = rep.state.t_cw.inverse();
    Eigen::Quaterniond q(t_wc.rotation);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    json j{{"index", rep.index},
           {"tau", rep.tau},
           {"delta_tau", rep.delta_tau},
           {"n_events", rep.n_events},
           {"skipped", rep.skipped},
           {"divergent", rep.divergent},
           {"bootstrapped", rep.bootstrapped},
           {"baseline_loss", rep.baseline_loss},
           {"final_loss", rep.final_loss},
           {"t_wc", {t_wc.translation.x(), t_wc.translation.y(), t_wc.translation.z(), q.x(),
                     q.y(), q.z(), q.w()}},
           {"linear", {rep.state.linear.x(), rep.state.linear.y(), rep.state.linear.z()}},
           {"angular", {rep.state.angular.x(), rep.state.angular.y(), rep.state.angular.z()}}};
    json stages = json::array();
    for (const auto& s : rep.stages) stages.push_back(stage_json(s));
    j["stages"] = stages;
    diag << j.dump() << "\n";

    if (a.dump_images) {
      const evsplat::DeltaRender dr = evsplat::render_intensity_change(
          map, rep.state, rep.delta_tau, intr, a.cfg.render);
      char name[64];
      std::snprintf(name, sizeof(name), "kf%05zu_delta.png", rep.index);
      evsplat::save_image(evsplat::to_u8_symmetric(dr.delta),
                          (fs::path(a.output_dir) / "images" / name).string());
    }
  };

  const evsplat::TrackResult result = evsplat::track_sequence(
      map, initial, events, a.events_per_keyframe, a.cfg, intr, on_keyframe);
  if (result.trajectory.empty())
    throw std::runtime_error("track: no keyframes produced (stream shorter than one window)");

  evsplat::save_trajectory_tum(result.trajectory,
                               (fs::path(a.output_dir) / "trajectory.tum").string());
  std::cout << "tracked " << result.trajectory.size() << " keyframes, "
            << result.divergent_count << " divergent, " << result.skipped_count
            << " skipped\n";
  return (result.divergent_count > 0 || result.skipped_count > 0) ? kExitDivergence : kExitOk;
}

// ------------------------------------------------------------- simulate ----

struct SimulateArgs {
  IntrinsicsArgs intr;
  SceneArgs scene;
  std::string output_dir;
  std::string path_kind = "shake";
  double duration = 2.0;
  double sample_rate = 1000.0;
  std::vector<double> start_position{0.0, 0.0, 0.0};
  std::vector<double> linear_velocity{0.05, 0.0, 0.0};
  double orbit_radius = 0.05, orbit_rate = 0.5;
  double shake_amp_t = 0.02, shake_amp_r = 0.03, shake_max_freq = 2.0;
  double contrast_threshold = 0.15;
  double frame_rate = 1000.0;
  double jitter = 0.0, spurious_rate = 0.0;
  int threads = 1;
  uint64_t seed = 1;
};

void attach_simulate(CLI::App* cmd, SimulateArgs& a) {
  a.intr.attach(cmd);
  a.scene.attach(cmd);
  cmd->add_option("--output", a.output_dir, "output directory")->required();
  cmd->add_option("--path", a.path_kind, "camera path: line|orbit|shake");
  cmd->add_option("--duration", a.duration, "path duration, seconds");
  cmd->add_option("--sample-rate", a.sample_rate, "ground-truth sample rate, Hz");
  cmd->add_option("--start-position", a.start_position, "camera start, world meters")->expected(3);
  cmd->add_option("--linear-velocity", a.linear_velocity, "line path velocity, world m/s")
      ->expected(3);
  cmd->add_option("--orbit-radius", a.orbit_radius, "orbit radius, meters");
  cmd->add_option("--orbit-rate", a.orbit_rate, "orbit revolutions per second");
  cmd->add_option("--shake-amp-t", a.shake_amp_t, "shake translation amplitude, meters");
  cmd->add_option("--shake-amp-r", a.shake_amp_r, "shake rotation amplitude, radians");
  cmd->add_option("--shake-max-freq", a.shake_max_freq, "shake bandwidth, Hz");
  cmd->add_option("--contrast-threshold", a.contrast_threshold, "event threshold C");
  cmd->add_option("--frame-rate", a.frame_rate, "differencing rate, Hz (>= 500 recommended)");
  cmd->add_option("--jitter", a.jitter, "timestamp noise sigma, seconds");
  cmd->add_option("--spurious-rate", a.spurious_rate, "noise events per pixel per second");
  cmd->add_option("--threads", a.threads, "worker threads");
  cmd->add_option("--seed", a.seed, "noise and path seed");
}

int run_simulate(SimulateArgs& a) {
  const evsplat::CameraIntrinsics intr = a.intr.build();
  const evsplat::GaussianMap map = a.scene.load();

  evsplat::PathParams path;
  if (a.path_kind == "line")
    path.kind = evsplat::PathKind::Line;
  else if (a.path_kind == "orbit")
    path.kind = evsplat::PathKind::Orbit;
  else if (a.path_kind == "shake")
    path.kind = evsplat::PathKind::Shake;
  else
    throw std::runtime_error("unknown --path '" + a.path_kind + "' (line|orbit|shake)");
  path.duration = a.duration;
  path.sample_rate = a.sample_rate;
  path.start_position = Eigen::Vector3d(a.start_position[0], a.start_position[1],
                                        a.start_position[2]);
  path.linear_velocity = Eigen::Vector3d(a.linear_velocity[0], a.linear_velocity[1],
                                         a.linear_velocity[2]);
  path.orbit_radius = a.orbit_radius;
  path.orbit_rate = a.orbit_rate;
  path.shake_amp_translation = a.shake_amp_t;
  path.shake_amp_rotation = a.shake_amp_r;
  path.shake_max_frequency = a.shake_max_freq;
  path.seed = a.seed;
  const evsplat::Trajectory traj = evsplat::make_camera_path(path);

  evsplat::SimOptions sim;
  sim.contrast_threshold = a.contrast_threshold;
  sim.frame_rate = a.frame_rate;
  sim.jitter_sigma = a.jitter;
  sim.spurious_rate = a.spurious_rate;
  sim.seed = a.seed;
  evsplat::RenderOptions ropts;
  ropts.threads = a.threads;

  const evsplat::SimulatedEvents out = evsplat::simulate_events(map, traj, intr, sim, ropts);

  fs::create_directories(a.output_dir);
  evsplat::save_events(out.events, (fs::path(a.output_dir) / "events.txt").string());
  evsplat::save_trajectory_tum(traj, (fs::path(a.output_dir) / "groundtruth.tum").string());
  evsplat::save_ply(map, (fs::path(a.output_dir) / "map.ply").string());
  json meta{{"events", out.events.size()},
            {"frames", out.frames_rendered},
            {"duration", a.duration},
            {"contrast_threshold", a.contrast_threshold},
            {"frame_rate", a.frame_rate},
            {"seed", a.seed}};
  std::ofstream(fs::path(a.output_dir) / "meta.json") << meta.dump(2) << "\n";
  std::cout << "simulated " << out.events.size() << " events over " << out.frames_rendered
            << " frames\n";
  return kExitOk;
}

// ------------------------------------------------------------- evaluate ----

struct EvaluateArgs {
  std::string estimate_path, reference_path, csv_path;
  double tolerance = 0.01;
  double align_tolerance = 0.05;
  bool no_align = false;
};

void attach_evaluate(CLI::App* cmd, EvaluateArgs& a) {
  cmd->add_option("--estimate", a.estimate_path, "estimated trajectory")->required();
  cmd->add_option("--reference", a.reference_path, "ground-truth trajectory")->required();
  cmd->add_option("--tolerance", a.tolerance, "association tolerance, seconds");
  cmd->add_option("--align-tolerance", a.align_tolerance, "first-pose association tolerance");
  cmd->add_option("--csv", a.csv_path, "write per-sample errors to this file");
  cmd->add_flag("--no-align", a.no_align, "skip the first-pose alignment");
}

int run_evaluate(const EvaluateArgs& a) {
  size_t non_unit = 0;
  evsplat::Trajectory est = evsplat::load_trajectory_tum(a.estimate_path, &non_unit);
  if (non_unit > 0)
    std::cerr << "warning: " << non_unit << " estimate quaternions were not unit norm\n";
  const evsplat::Trajectory gt = evsplat::load_trajectory_tum(a.reference_path);
  if (!a.no_align) est = evsplat::align_first_pose(est, gt, a.align_tolerance);
  const evsplat::AteResult res = evsplat::ate(est, gt, a.tolerance);
  if (res.matched == 0) throw std::runtime_error("evaluate: no associated samples");
  if (!a.csv_path.empty()) evsplat::save_errors_csv(res, a.csv_path);
  std::printf("matched %zu of %zu\n", res.matched, res.total);
  std::printf("ate position rmse [cm]: %.2f\n", res.position_rmse_cm);
  std::printf("ate orientation rmse [deg]: %.2f\n", res.orientation_rmse_deg);
  return kExitOk;
}

// --------------------------------------------------------------- render ----

struct RenderArgs {
  IntrinsicsArgs intr;
  SceneArgs scene;
  std::string output_path;
  std::string trajectory_path;
  double time = 0.0;
  std::vector<double> pose;  // camera-to-world
  bool delta = false;
  std::vector<double> linear{0.0, 0.0, 0.0};
  std::vector<double> angular{0.0, 0.0, 0.0};
  double delta_tau = 0.02;
  int threads = 1;
};

void attach_render(CLI::App* cmd, RenderArgs& a) {
  a.intr.attach(cmd);
  a.scene.attach(cmd);
  cmd->add_option("--output", a.output_path, "output image (.png or .pgm)")->required();
  cmd->add_option("--pose", a.pose, "camera-to-world pose: tx ty tz qx qy qz qw")->expected(7);
  cmd->add_option("--trajectory", a.trajectory_path, "pose source trajectory file");
  cmd->add_option("--time", a.time, "query time for --trajectory");
  cmd->add_flag("--delta", a.delta, "render the log-intensity difference instead");
  cmd->add_option("--linear", a.linear, "window linear velocity, m/s")->expected(3);
  cmd->add_option("--angular", a.angular, "window angular velocity, rad/s")->expected(3);
  cmd->add_option("--delta-tau", a.delta_tau, "window span for --delta, seconds");
  cmd->add_option("--threads", a.threads, "worker threads");
}

int run_render(const RenderArgs& a) {
  const evsplat::CameraIntrinsics intr = a.intr.build();
  const evsplat::GaussianMap map = a.scene.load();
  evsplat::RigidTransform t_cw;
  if (!a.pose.empty())
    t_cw = pose_from_wc_fields(a.pose);
  else if (!a.trajectory_path.empty())
    t_cw = evsplat::load_trajectory_tum(a.trajectory_path).pose_at(a.time);
  else
    throw std::runtime_error("render: need --pose or --trajectory");

  evsplat::RenderOptions opts;
  opts.threads = a.threads;
  if (a.delta) {
    evsplat::MotionState state;
    state.t_cw = t_cw;
    state.linear = Eigen::Vector3d(a.linear[0], a.linear[1], a.linear[2]);
    state.angular = Eigen::Vector3d(a.angular[0], a.angular[1], a.angular[2]);
    const evsplat::DeltaRender dr =
        evsplat::render_intensity_change(map, state, a.delta_tau, intr, opts);
    evsplat::save_image(evsplat::to_u8_symmetric(dr.delta), a.output_path);
  } else {
    const evsplat::RenderedImage img = evsplat::render(map, t_cw, intr, opts);
    evsplat::ImageF64 intensity(intr.width, intr.height);
    for (size_t i = 0; i < intensity.size(); ++i)
      intensity[i] = std::exp(img.log_intensity[i]);
    evsplat::save_image(evsplat::to_u8_unit(intensity), a.output_path);
  }
  std::cout << "wrote " << a.output_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-camera 6-DOF tracking against gaussian splatting maps"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file with one section per subcommand");

  TrackArgs track_args;
  SimulateArgs sim_args;
  EvaluateArgs eval_args;
  RenderArgs render_args;
  CLI::App* c_track = app.add_subcommand("track", "track a camera through an event stream");
  CLI::App* c_sim = app.add_subcommand("simulate", "synthesize an event stream from a map");
  CLI::App* c_eval = app.add_subcommand("evaluate", "absolute trajectory error of an estimate");
  CLI::App* c_render = app.add_subcommand("render", "render a map view or difference image");
  attach_track(c_track, track_args);
  attach_simulate(c_sim, sim_args);
  attach_evaluate(c_eval, eval_args);
  attach_render(c_render, render_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (c_track->parsed()) return run_track(track_args);
    if (c_sim->parsed()) return run_simulate(sim_args);
    if (c_eval->parsed()) return run_evaluate(eval_args);
    if (c_render->parsed()) return run_render(render_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
