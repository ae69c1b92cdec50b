#include <algorithm>
#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "corrgs/poseopt.hpp"
#include "corrgs/rng.hpp"
#include "test_util.hpp"

using namespace corrgs;

namespace {

Intrinsics small_intrinsics(int w = 64, int h = 48, double f = 60.0) {
  Intrinsics K;
  K.fx = K.fy = f;
  K.cx = w / 2;
  K.cy = h / 2;
  K.width = w;
  K.height = h;
  return K;
}

// Random splats with camera depths separated by > 1e-3 m so that finite
// differences of the pose can never reorder the compositing sort.
GaussianMap fd_scene(int n, uint64_t seed, const Pose& view) {
  RngStream rng(seed, 0, 0);
  GaussianMap map;
  for (int i = 0; i < n; ++i) {
    Gaussian g;
    g.X = Eigen::Vector3d(rng.uniform() * 1.6 - 0.8, rng.uniform() * 1.2 - 0.6,
                          1.5 + rng.uniform() * 2.0);
    g.r = 0.03 + rng.uniform() * 0.07;
    g.opacity = 0.3 + rng.uniform() * 0.65;
    g.c = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
    map.push_back(g);
  }
  const Eigen::Matrix3d R = quat_to_rotmat(view.q);
  std::sort(map.begin(), map.end(), [&](const Gaussian& a, const Gaussian& b) {
    return (R * a.X + view.t).z() < (R * b.X + view.t).z();
  });
  for (size_t i = 1; i < map.size(); ++i) {
    const double za = (R * map[i - 1].X + view.t).z();
    const double zb = (R * map[i].X + view.t).z();
    if (zb < za + 1e-3) map[i].X += R.row(2).transpose() * (za + 1e-3 - zb);
  }
  return map;
}

Pose small_rotation_pose(double angle_rad, const Eigen::Vector3d& axis,
                         const Eigen::Vector3d& t) {
  Pose p;
  const Eigen::Vector3d u = axis.normalized();
  p.q = quat_canonicalized(Eigen::Vector4d(
      std::cos(angle_rad / 2.0), u.x() * std::sin(angle_rad / 2.0),
      u.y() * std::sin(angle_rad / 2.0), u.z() * std::sin(angle_rad / 2.0)));
  p.t = t;
  return p;
}

Frame observe(const GaussianMap& map, const Pose& pose, const Intrinsics& K,
              const RenderConfig& rc = {}) {
  const RenderOutput out = render(map, pose, K, rc);
  Frame f = make_frame(K.width, K.height, 0.0, K);
  f.rgb = out.rgb;
  f.depth = out.depth;
  f.rebuild_valid_mask();
  return f;
}

double loss_at(const GaussianMap& map, const Pose& pose, const Frame& obs,
               const LossParams& lp, const RenderConfig& rc,
               const std::vector<uint8_t>& mask) {
  const RenderOutput out = render(map, pose, obs.intrinsics, rc);
  return render_loss(out, obs, lp.lambda_c, lp.lambda_d, lp.tau, &mask);
}

// Central finite differences over the seven raw pose parameters.
void fd_gradient(const GaussianMap& map, const Pose& pose, const Frame& obs,
                 const LossParams& lp, const RenderConfig& rc,
                 const std::vector<uint8_t>& mask, double h,
                 Eigen::Vector4d* dq, Eigen::Vector3d* dt) {
  for (int a = 0; a < 4; ++a) {
    Pose p = pose, m = pose;
    p.q[a] += h;
    m.q[a] -= h;
    (*dq)[a] = (loss_at(map, p, obs, lp, rc, mask) -
                loss_at(map, m, obs, lp, rc, mask)) /
               (2.0 * h);
  }
  for (int a = 0; a < 3; ++a) {
    Pose p = pose, m = pose;
    p.t[a] += h;
    m.t[a] -= h;
    (*dt)[a] = (loss_at(map, p, obs, lp, rc, mask) -
                loss_at(map, m, obs, lp, rc, mask)) /
               (2.0 * h);
  }
}

double relative_gradient_error(const Eigen::Vector4d& adq,
                               const Eigen::Vector3d& adt,
                               const Eigen::Vector4d& fdq,
                               const Eigen::Vector3d& fdt) {
  double scale = std::max(fdq.cwiseAbs().maxCoeff(),
                          fdt.cwiseAbs().maxCoeff());
  scale = std::max(scale, 1e-12);
  const double err = std::max((adq - fdq).cwiseAbs().maxCoeff(),
                              (adt - fdt).cwiseAbs().maxCoeff());
  return err / scale;
}

}  // namespace

TEST_CASE("gradient is zero when observing the rendered pose", "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  const Pose pose = small_rotation_pose(0.2, {0.3, 1.0, -0.2},
                                        {0.05, -0.02, 0.1});
  const GaussianMap map = fd_scene(50, 31, pose);
  const Frame obs = observe(map, pose, K);
  const PoseGradient g = pose_gradient(map, pose, obs);
  REQUIRE(g.loss == 0.0);
  REQUIRE(g.dq.norm() < 1e-8);
  REQUIRE(g.dt.norm() < 1e-8);
}

TEST_CASE("analytical gradient matches central finite differences",
          "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  RenderConfig smooth;
  smooth.support_sigmas = 0.0;
  smooth.min_transmittance = 0.0;
  const LossParams lp;
  const Pose base = small_rotation_pose(0.15, {0.2, 0.9, 0.4},
                                        {0.02, 0.03, -0.04});
  const GaussianMap map = fd_scene(50, 7, base);
  const Pose truth = small_rotation_pose(0.17, {0.25, 0.85, 0.42},
                                         {0.025, 0.02, -0.03});
  const Frame obs = observe(map, truth, K, smooth);

  const RenderOutput base_out = render(map, base, K, smooth);
  const std::vector<uint8_t> mask = depth_loss_mask(base_out, obs, lp.tau);

  const PoseGradient g = pose_gradient(map, base, obs, lp, smooth, &mask);
  Eigen::Vector4d fdq;
  Eigen::Vector3d fdt;
  fd_gradient(map, base, obs, lp, smooth, mask, 1e-5, &fdq, &fdt);
  REQUIRE(relative_gradient_error(g.dq, g.dt, fdq, fdt) < 1e-3);
}

TEST_CASE("analytical gradient carries the background term", "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  RenderConfig smooth;
  smooth.support_sigmas = 0.0;
  smooth.min_transmittance = 0.0;
  smooth.background = Eigen::Vector3d(0.35, 0.5, 0.15);
  const LossParams lp;
  const Pose base = small_rotation_pose(0.15, {0.2, 0.9, 0.4},
                                        {0.02, 0.03, -0.04});
  const GaussianMap map = fd_scene(50, 7, base);
  const Pose truth = small_rotation_pose(0.17, {0.25, 0.85, 0.42},
                                         {0.025, 0.02, -0.03});
  const Frame obs = observe(map, truth, K, smooth);

  const RenderOutput base_out = render(map, base, K, smooth);
  const std::vector<uint8_t> mask = depth_loss_mask(base_out, obs, lp.tau);

  const PoseGradient g = pose_gradient(map, base, obs, lp, smooth, &mask);
  Eigen::Vector4d fdq;
  Eigen::Vector3d fdt;
  fd_gradient(map, base, obs, lp, smooth, mask, 1e-5, &fdq, &fdt);
  REQUIRE(relative_gradient_error(g.dq, g.dt, fdq, fdt) < 1e-3);
}

TEST_CASE("masked-out depth pixels cannot influence the gradient",
          "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  RenderConfig smooth;
  smooth.support_sigmas = 0.0;
  smooth.min_transmittance = 0.0;
  const LossParams lp;
  const Pose base = small_rotation_pose(0.1, {1.0, 0.2, 0.1},
                                        {0.01, 0.02, 0.0});
  const GaussianMap map = fd_scene(40, 13, base);
  const Pose truth = small_rotation_pose(0.12, {1.0, 0.18, 0.12},
                                         {0.02, 0.015, 0.01});
  Frame obs = observe(map, truth, K, smooth);

  const RenderOutput base_out = render(map, base, K, smooth);
  std::vector<uint8_t> mask = depth_loss_mask(base_out, obs, lp.tau);
  for (size_t i = 0; i < mask.size(); i += 3) mask[i] = 0;

  const PoseGradient before = pose_gradient(map, base, obs, lp, smooth, &mask);
  // Corrupt observed depth at every masked-out pixel; set lambda_c = 0 so
  // only the depth term remains.
  LossParams depth_only = lp;
  depth_only.lambda_c = 0.0;
  const PoseGradient d_before =
      pose_gradient(map, base, obs, depth_only, smooth, &mask);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const size_t i = static_cast<size_t>(y) * K.width + x;
      if (mask[i] == 0 && obs.valid_at(x, y)) obs.set_depth(x, y, 9.9);
    }
  }
  const PoseGradient d_after =
      pose_gradient(map, base, obs, depth_only, smooth, &mask);
  REQUIRE(d_after.dq == d_before.dq);
  REQUIRE(d_after.dt == d_before.dt);
  REQUIRE(d_after.loss == d_before.loss);

  // Additivity: gradient over a mask equals the sum over a disjoint split.
  std::vector<uint8_t> half_a = mask, half_b = mask;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) ((i % 2 == 0) ? half_b : half_a)[i] = 0;
  }
  const PoseGradient ga = pose_gradient(map, base, obs, depth_only, smooth,
                                        &half_a);
  const PoseGradient gb = pose_gradient(map, base, obs, depth_only, smooth,
                                        &half_b);
  REQUIRE((ga.dq + gb.dq - d_after.dq).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((ga.dt + gb.dt - d_after.dt).cwiseAbs().maxCoeff() < 1e-12);
  (void)before;
}

TEST_CASE("on-axis splat with symmetric residual has no lateral pull",
          "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  Gaussian g;
  g.X = Eigen::Vector3d(0.0, 0.0, 2.0);
  g.r = 0.1;
  g.opacity = 0.8;
  g.c = Eigen::Vector3d(0.2, 0.4, 0.6);
  const GaussianMap map = {g};
  Frame obs = observe(map, Pose{}, K);
  for (size_t i = 0; i < obs.rgb.size(); ++i) {
    obs.rgb.pixels()[i] = std::min(1.0, obs.rgb.pixels()[i] + 0.1);
  }
  LossParams color_only;
  color_only.lambda_d = 0.0;
  const PoseGradient grad = pose_gradient(map, Pose{}, obs, color_only);
  REQUIRE(std::abs(grad.dt.x()) < 1e-10);
  REQUIRE(std::abs(grad.dt.y()) < 1e-10);
  REQUIRE(std::abs(grad.dt.z()) > 1e-8);
}

TEST_CASE("refine with zero iterations returns the initial pose", "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  const Pose init = small_rotation_pose(0.05, {0.0, 1.0, 0.0}, {0.1, 0.0, 0.0});
  const GaussianMap map = fd_scene(30, 3, init);
  const Frame obs = observe(map, Pose{}, K);
  RefineConfig cfg;
  cfg.iters = 0;
  const RefineResult res = refine_pose(map, init, obs, cfg);
  REQUIRE(res.pose.q == init.q);
  REQUIRE(res.pose.t == init.t);
  REQUIRE(res.history.size() == 1);
}

TEST_CASE("refine recovers a small pose offset", "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  const Pose truth;
  const GaussianMap map = fd_scene(200, 17, truth);
  const Frame obs = observe(map, truth, K);
  const Pose init = small_rotation_pose(
      1.0 * M_PI / 180.0, {0.3, 1.0, 0.2},
      Eigen::Vector3d(0.003, -0.002, 0.003));
  RefineConfig cfg;
  cfg.lr_rot = 1e-6;
  cfg.lr_trans = 2e-5;
  const RefineResult res = refine_pose(map, init, obs, cfg);
  INFO("rot err deg " << rotation_error(res.pose, truth) * 180.0 / M_PI
                      << " trans err " << translation_error(res.pose, truth)
                      << " loss " << res.history.front() << " -> "
                      << res.best_loss);
  REQUIRE(rotation_error(res.pose, truth) < 0.5 * M_PI / 180.0);
  REQUIRE(translation_error(res.pose, truth) < 0.005);
}

TEST_CASE("refine cannot recover a fast-motion offset", "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  const Pose truth;
  const GaussianMap map = fd_scene(200, 17, truth);
  const Frame obs = observe(map, truth, K);
  const Pose init = small_rotation_pose(30.0 * M_PI / 180.0, {0.3, 1.0, 0.2},
                                        Eigen::Vector3d(0.35, -0.2, 0.25));
  RefineConfig cfg;
  cfg.lr_rot = 1e-6;
  cfg.lr_trans = 2e-5;
  const RefineResult res = refine_pose(map, init, obs, cfg);
  REQUIRE(rotation_error(res.pose, truth) > 5.0 * M_PI / 180.0);
}

TEST_CASE("best-so-far loss never increases along the history", "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  const Pose truth;
  const GaussianMap map = fd_scene(80, 23, truth);
  const Frame obs = observe(map, truth, K);
  const Pose init = small_rotation_pose(0.02, {0.0, 1.0, 0.0},
                                        {0.005, 0.0, -0.004});
  RefineConfig cfg;
  cfg.iters = 40;
  cfg.lr_rot = 1e-6;
  cfg.lr_trans = 2e-5;
  const RefineResult res = refine_pose(map, init, obs, cfg);
  REQUIRE(res.history.size() == 41);
  double best = res.history.front();
  for (double l : res.history) best = std::min(best, l);
  REQUIRE(res.best_loss == best);
}

TEST_CASE("depth noise inflates translation-gradient variance", "[poseopt]") {
  const Intrinsics K = small_intrinsics();
  const Pose pose;
  const GaussianMap map = fd_scene(60, 41, pose);
  const Frame clean = observe(map, pose, K);

  // Shared unit-noise fields scaled by sigma: the gradient is linear in the
  // observed depth, so the sample variance must grow as sigma^2.
  const int draws = 12;
  std::vector<Image> noise;
  for (int d = 0; d < draws; ++d) {
    RngStream rng(100 + d, 0, 0);
    Image n(K.width, K.height, 1, 0.0);
    for (double& v : n.pixels()) v = rng.normal();
    noise.push_back(n);
  }

  double prev_var = -1.0;
  for (double sigma : {0.01, 0.03, 0.09}) {
    std::vector<Eigen::Vector3d> grads;
    for (int d = 0; d < draws; ++d) {
      Frame obs = clean;
      for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
          if (!obs.valid_at(x, y)) continue;
          obs.set_depth(x, y,
                        std::max(0.5, clean.depth.at(x, y) +
                                          sigma * noise[d].at(x, y)));
        }
      }
      grads.push_back(pose_gradient(map, pose, obs).dt);
    }
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& g : grads) mean += g;
    mean /= draws;
    double var = 0.0;
    for (const auto& g : grads) var += (g - mean).squaredNorm();
    var /= draws - 1;
    REQUIRE(var > prev_var);
    prev_var = var;
  }
}
