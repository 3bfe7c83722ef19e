#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "evsplat/rasterizer.hpp"
#include "support/helpers.hpp"

using namespace evsplat;

using test_support::fd_options;
using test_support::fd_scene;
using test_support::random_weights;
using test_support::weighted_loss;

namespace {

GaussianMap nudged(const GaussianMap& map, size_t index, int axis, double d) {
  std::vector<Gaussian3D> gs = map.gaussians();
  gs[index].mean[axis] += d;
  return GaussianMap(std::move(gs), map.sh_degree());
}

}  // namespace

TEST_CASE("backward point gradient matches central differences") {
  const CameraIntrinsics intr = test_support::default_intrinsics(64, 48, 90.0);
  const RenderOptions opts = fd_options();
  const GaussianMap map = fd_scene(101);
  const ImageF64 weights = random_weights(intr.width, intr.height, 5);
  const RigidTransform identity;  // cam_point == world mean, so FD can move the mean

  const RenderedImage img = render(map, identity, intr, opts);
  const RasterGradients grads = backward(img, weights);
  REQUIRE(grads.point.size() == img.splats.size());

  const double h = 1e-6;
  for (const Splat2D& s : img.splats) {
    const Eigen::Vector3d& g = grads.point[&s - img.splats.data()];
    for (int axis = 0; axis < 3; ++axis) {
      const double fd = test_support::central_diff(
          [&](double d) {
            return weighted_loss(nudged(map, s.source, axis, d), identity, intr, opts,
                                 weights);
          },
          h);
      REQUIRE(g[axis] == Catch::Approx(fd).epsilon(1e-5).margin(1e-6));
    }
  }
}

TEST_CASE("backward translation gradient matches central differences") {
  const CameraIntrinsics intr = test_support::default_intrinsics(64, 48, 90.0);
  const RenderOptions opts = fd_options();
  const GaussianMap map = fd_scene(77);
  const ImageF64 weights = random_weights(intr.width, intr.height, 6);
  std::mt19937_64 rng(8);
  const RigidTransform t_cw{rodrigues(test_support::random_vector(rng, 0.05)),
                            Eigen::Vector3d(0.02, -0.03, 0.05)};

  const RenderedImage img = render(map, t_cw, intr, opts);
  const RasterGradients grads = backward(img, weights);
  Eigen::Vector3d g_t = Eigen::Vector3d::Zero();
  for (const auto& g : grads.point) g_t += g;  // d(cam_point)/d(translation) = I

  const double h = 1e-6;
  for (int axis = 0; axis < 3; ++axis) {
    const double fd = test_support::central_diff(
        [&](double d) {
          RigidTransform t = t_cw;
          t.translation[axis] += d;
          return weighted_loss(map, t, intr, opts, weights);
        },
        h);
    REQUIRE(g_t[axis] == Catch::Approx(fd).epsilon(1e-5).margin(1e-6));
  }
}

TEST_CASE("backward rotation gradient matches central differences entrywise") {
  // dL/dR has two parts: the blend moving with cam_point = R mu + t (point
  // gradient times mu^T) and the covariance term R Sigma R^T (the rotation
  // accumulator). The finite difference perturbs raw matrix entries, which the
  // forward formulas accept, so both paths are checked together.
  const CameraIntrinsics intr = test_support::default_intrinsics(64, 48, 90.0);
  const RenderOptions opts = fd_options();
  const GaussianMap map = fd_scene(303, 6);
  const ImageF64 weights = random_weights(intr.width, intr.height, 9);
  std::mt19937_64 rng(12);
  const RigidTransform t_cw{rodrigues(test_support::random_vector(rng, 0.08)),
                            Eigen::Vector3d(0.01, 0.02, -0.04)};

  const RenderedImage img = render(map, t_cw, intr, opts);
  const RasterGradients grads = backward(img, weights);
  Eigen::Matrix3d g_r = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < img.splats.size(); ++i) {
    g_r += grads.rotation[i];
    g_r += grads.point[i] * map[img.splats[i].source].mean.transpose();
  }

  const double h = 1e-6;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const double fd = test_support::central_diff(
          [&](double d) {
            RigidTransform t = t_cw;
            t.rotation(r, c) += d;
            return weighted_loss(map, t, intr, opts, weights);
          },
          h);
      REQUIRE(g_r(r, c) == Catch::Approx(fd).epsilon(1e-5).margin(1e-6));
    }
  }
}

TEST_CASE("backward is exact under multi-threading and zero on flat losses") {
  const CameraIntrinsics intr = test_support::default_intrinsics();
  RenderOptions opts = fd_options();
  const GaussianMap map = fd_scene(55, 20);
  const ImageF64 weights = random_weights(intr.width, intr.height, 4);

  opts.threads = 1;
  const RenderedImage img1 = render(map, RigidTransform{}, intr, opts);
  const RasterGradients base = backward(img1, weights);
  opts.threads = 7;
  const RenderedImage img7 = render(map, RigidTransform{}, intr, opts);
  const RasterGradients multi = backward(img7, weights);
  for (size_t i = 0; i < base.point.size(); ++i) {
    REQUIRE(base.point[i] == multi.point[i]);  // bitwise: ordered reduction
    REQUIRE(base.rotation[i] == multi.rotation[i]);
  }

  ImageF64 zeros(intr.width, intr.height);
  const RasterGradients none = backward(img1, zeros);
  for (const auto& g : none.point) REQUIRE(g.isZero(0.0));
  for (const auto& g : none.rotation) REQUIRE(g.isZero(0.0));

  ImageF64 wrong(intr.width / 2, intr.height);
  REQUIRE_THROWS_AS(backward(img1, wrong), std::invalid_argument);
}

TEST_CASE("pixels at the intensity floor and clamped contributions stay flat") {
  const CameraIntrinsics intr = test_support::default_intrinsics(64, 48, 90.0);
  RenderOptions opts = fd_options();

  // A single nearly opaque gaussian: its center pixels clamp at alpha_clamp,
  // the far background sits below the intensity floor. Both regions must
  // contribute exactly nothing, and what remains must still match FD.
  // Projected variance (90/2 * 0.17)^2 + 0.3 ~ 59 px^2: wide enough that the
  // half-pixel offset from the grid center still clamps, narrow enough that
  // the image corners fall below the intensity floor.
  std::vector<Gaussian3D> gs(1);
  gs[0].mean = Eigen::Vector3d(0.0, 0.0, 2.0);
  gs[0].scale = Eigen::Vector3d(0.17, 0.17, 0.17);
  gs[0].opacity = 0.9999;
  gs[0].sh.assign(1, (Eigen::Vector3d(0.9, 0.8, 0.7) - Eigen::Vector3d::Constant(0.5)) / kSH0);
  const GaussianMap map(gs, 0);
  const ImageF64 weights = random_weights(intr.width, intr.height, 2);

  const RenderedImage img = render(map, RigidTransform{}, intr, opts);
  // Sanity: the fixture really has clamped records and floor pixels.
  bool any_clamped = false;
  for (const auto& rec : img.records) any_clamped |= rec.alpha >= opts.alpha_clamp;
  REQUIRE(any_clamped);
  REQUIRE(img.luma(0, 0) < opts.intensity_floor);

  const RasterGradients grads = backward(img, weights);
  REQUIRE(grads.point[0].allFinite());
  REQUIRE(grads.rotation[0].allFinite());

  const double h = 1e-6;
  for (int axis = 0; axis < 3; ++axis) {
    const double fd = test_support::central_diff(
        [&](double d) {
          return weighted_loss(nudged(map, 0, axis, d), RigidTransform{}, intr, opts,
                               weights);
        },
        h);
    REQUIRE(grads.point[0][axis] == Catch::Approx(fd).epsilon(1e-4).margin(1e-5));
  }
}
