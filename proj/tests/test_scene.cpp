#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "corrgs/scene.hpp"

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

}  // namespace

TEST_CASE("make_room_scene places valid splats on the box walls", "[scene]") {
  const double extent = 4.0;
  const GaussianMap map = make_room_scene(7, 500, extent);
  REQUIRE(map.size() == 500);
  CHECK_NOTHROW(check_map(map));
  const double e = extent / 2.0;
  for (const Gaussian& g : map) {
    const bool on_wall = g.X.x() == -e || g.X.x() == e || g.X.y() == -e ||
                         g.X.y() == e || g.X.z() == e;
    CHECK(on_wall);
    CHECK(g.X.cwiseAbs().maxCoeff() <= e);
    CHECK(g.X.z() >= -e);
    CHECK(g.r > 0.0);
    CHECK(g.opacity >= 0.96);
    CHECK(g.opacity <= 0.99);
    for (int c = 0; c < 3; ++c) {
      CHECK(g.c[c] >= 0.1);
      CHECK(g.c[c] <= 0.9);
    }
  }

  SECTION("single-splat map") {
    CHECK(make_room_scene(7, 1, extent).size() == 1);
  }
  SECTION("different seeds give different maps") {
    const GaussianMap other = make_room_scene(8, 500, extent);
    bool differs = false;
    for (size_t i = 0; i < map.size() && !differs; ++i) {
      differs = map[i].X != other[i].X || map[i].c != other[i].c;
    }
    CHECK(differs);
  }
  SECTION("invalid arguments") {
    CHECK_THROWS_AS(make_room_scene(7, 0, extent), DataError);
    CHECK_THROWS_AS(make_room_scene(7, 10, 0.0), DataError);
  }
}

TEST_CASE("room scene covers the view from the box center", "[scene]") {
  const GaussianMap map = make_room_scene(7, 4000, 4.0);
  const Intrinsics K = small_intrinsics();
  const Pose view = look_at(Eigen::Vector3d(0.0, 0.0, -0.01),
                            Eigen::Vector3d(0.0, 0.0, 1.0));
  const RenderOutput out = render(map, view, K);
  double min_cov = 1.0;
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      min_cov = std::min(min_cov, out.coverage.at(x, y));
    }
  }
  CHECK(min_cov > 0.9);
}

TEST_CASE("look_at orients the camera toward the target", "[scene]") {
  const Eigen::Vector3d center(1.0, 0.5, -2.0);
  const Eigen::Vector3d target(0.0, 0.0, 0.5);
  const Pose p = look_at(center, target);
  const Eigen::Matrix3d r = quat_to_rotmat(p.q);

  // The camera center maps to the origin of the camera frame.
  CHECK((r * center + p.t).norm() < 1e-12);
  // The target lands on the +z optical axis.
  const Eigen::Vector3d tc = r * target + p.t;
  CHECK(std::abs(tc.x()) < 1e-12);
  CHECK(std::abs(tc.y()) < 1e-12);
  CHECK(tc.z() > 0.0);
  // Camera y stays aligned with world +y (rows of R are camera axes).
  CHECK(r.row(1).dot(Eigen::Vector3d(0.0, 1.0, 0.0)) > 0.5);
}

TEST_CASE("make_orbit_trajectory steps uniformly around the origin",
          "[scene]") {
  const int n = 9;
  const double radius = 2.0;
  const double span = 0.8;
  const Trajectory traj = make_orbit_trajectory(n, radius, span);
  REQUIRE(traj.size() == static_cast<size_t>(n));
  const double step = span / (n - 1);
  for (int k = 0; k < n; ++k) {
    CHECK(traj[k].timestamp == Catch::Approx(k / 30.0).margin(1e-15));
    CHECK(camera_center(traj[k].pose).norm() ==
          Catch::Approx(radius).margin(1e-12));
    if (k > 0) {
      CHECK(rotation_error(traj[k - 1].pose, traj[k].pose) ==
            Catch::Approx(step).margin(1e-9));
    }
  }

  SECTION("single pose") {
    CHECK(make_orbit_trajectory(1, radius, span).size() == 1);
  }
  SECTION("phase rotates the whole orbit") {
    const double phase = 0.3;
    const Trajectory shifted = make_orbit_trajectory(n, radius, span, phase);
    for (int k = 0; k < n; ++k) {
      CHECK(camera_center(shifted[k].pose).norm() ==
            Catch::Approx(radius).margin(1e-12));
      CHECK(rotation_error(traj[k].pose, shifted[k].pose) ==
            Catch::Approx(phase).margin(1e-9));
    }
  }
  SECTION("zero span repeats one pose") {
    const Trajectory still = make_orbit_trajectory(4, radius, 0.0);
    for (const TimedPose& tp : still) {
      CHECK((tp.pose.q - still[0].pose.q).norm() < 1e-15);
      CHECK((tp.pose.t - still[0].pose.t).norm() < 1e-15);
    }
  }
  SECTION("invalid arguments") {
    CHECK_THROWS_AS(make_orbit_trajectory(0, radius, span), DataError);
    CHECK_THROWS_AS(make_orbit_trajectory(4, 0.0, span), DataError);
  }
}

TEST_CASE("render_sequence is deterministic and aligned with the trajectory",
          "[scene]") {
  const GaussianMap map = make_room_scene(3, 800, 4.0);
  const Intrinsics K = small_intrinsics(32, 24, 30.0);
  const Trajectory traj = make_orbit_trajectory(3, 1.5, 0.2);
  const FrameSequence a = render_sequence(map, traj, K);
  const FrameSequence b = render_sequence(map, traj, K);
  REQUIRE(a.size() == 3);
  for (size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].timestamp == traj[k].timestamp);
    CHECK(a[k].intrinsics == K);
    CHECK(a[k].rgb.pixels() == b[k].rgb.pixels());
    CHECK(a[k].depth.pixels() == b[k].depth.pixels());
    CHECK_NOTHROW(a[k].check());
  }
}
