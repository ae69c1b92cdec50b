#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "corrgs/pose.hpp"
#include "corrgs/rng.hpp"
#include "corrgs/splat.hpp"
#include "corrgs/types.hpp"

namespace corrgs {

namespace detail {

inline double hash01_3(uint64_t x, uint64_t y, uint64_t z, uint64_t salt) {
  uint64_t h = salt ^ (x * 0x9E3779B97F4A7C15ull) ^
               (y * 0xC2B2AE3D27D4EB4Full) ^ (z * 0xD6E8FEB86659FD93ull);
  h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ull;
  h = (h ^ (h >> 27)) * 0x94D049BB133111EBull;
  h ^= (h >> 31);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double sstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Trilinear lattice value noise in [0,1], cell size in meters.
inline double value_noise_3d(const Eigen::Vector3d& p, double cell,
                             uint64_t salt) {
  const double gx = p.x() / cell, gy = p.y() / cell, gz = p.z() / cell;
  const int64_t ix = static_cast<int64_t>(std::floor(gx));
  const int64_t iy = static_cast<int64_t>(std::floor(gy));
  const int64_t iz = static_cast<int64_t>(std::floor(gz));
  const double tx = sstep(gx - ix), ty = sstep(gy - iy), tz = sstep(gz - iz);
  double v[2][2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        v[a][b][c] = hash01_3(ix + a, iy + b, iz + c, salt);
  double w[2][2];
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 2; ++c)
      w[b][c] = v[0][b][c] * (1 - tx) + v[1][b][c] * tx;
  const double u0 = w[0][0] * (1 - ty) + w[1][0] * ty;
  const double u1 = w[0][1] * (1 - ty) + w[1][1] * ty;
  return u0 * (1 - tz) + u1 * tz;
}

}  // namespace detail

// Splats scattered over five interior walls of an axis-aligned box centered
// at the origin (the wall at z = -extent/2 is left open). Colors sample a
// low-frequency 3D noise field so every surface carries matchable texture.
inline GaussianMap make_room_scene(uint64_t seed, int n_gaussians,
                                   double extent) {
  if (n_gaussians < 1) throw DataError("make_room_scene: n_gaussians < 1");
  if (!(extent > 0.0)) throw DataError("make_room_scene: extent <= 0");
  const double e = extent / 2.0;
  RngStream rng(seed, 0, 1);
  // Radius sized so n splats tile the five walls with enough overlap that
  // interior views are fully covered (expected opacity sum ~ 8 per ray).
  const double radius = 1.2 * std::sqrt(5.0 * extent * extent / n_gaussians);
  GaussianMap map;
  map.reserve(n_gaussians);
  for (int i = 0; i < n_gaussians; ++i) {
    const int wall = rng.uniform_int(5);
    const double a = (rng.uniform() * 2.0 - 1.0) * e;
    const double b = (rng.uniform() * 2.0 - 1.0) * e;
    Gaussian g;
    switch (wall) {
      case 0: g.X = Eigen::Vector3d(-e, a, b); break;
      case 1: g.X = Eigen::Vector3d(e, a, b); break;
      case 2: g.X = Eigen::Vector3d(a, -e, b); break;
      case 3: g.X = Eigen::Vector3d(a, e, b); break;
      default: g.X = Eigen::Vector3d(a, b, e); break;
    }
    g.r = radius * (0.8 + 0.4 * rng.uniform());
    // Near-opaque so the frontmost splat dominates each ray and the blend
    // stays stable when coplanar wall splats reorder between views.
    g.opacity = 0.96 + 0.03 * rng.uniform();
    for (int c = 0; c < 3; ++c) {
      const uint64_t salt = seed * 4 + 1 + c;
      const double coarse = detail::value_noise_3d(g.X, extent / 2.0, salt);
      const double fine = detail::value_noise_3d(g.X, extent / 8.0, salt + 97);
      g.c[c] = 0.1 + 0.8 * (0.65 * coarse + 0.35 * fine);
    }
    map.push_back(g);
  }
  return map;
}

// Synthetic RGB-D observation of the textured world plane z = plane_z as
// seen from `pose`. Depth is exact and the texture is sampled analytically,
// so a map densified from this frame reproduces the observed surface without
// any resampling error; sequences rendered from such a map make a tracking
// testbed whose loss minimum sits at the true pose.
inline Frame make_plane_frame(const Intrinsics& K, const Pose& pose,
                              double plane_z, uint64_t seed,
                              double timestamp = 0.0) {
  Frame f = make_frame(K.width, K.height, timestamp, K);
  const Eigen::Matrix3d Rc2w = quat_to_rotmat(pose.q).transpose();
  const Eigen::Vector3d C = -(Rc2w * pose.t);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Eigen::Vector3d vc((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const Eigen::Vector3d w = Rc2w * vc;
      if (!(std::abs(w.z()) > 1e-12)) throw DataError(
          "make_plane_frame: view ray parallel to the plane");
      const double d = (plane_z - C.z()) / w.z();
      if (!(d > 0.0)) throw DataError("make_plane_frame: plane behind camera");
      f.depth.at(x, y) = d;
      const Eigen::Vector3d P = C + d * w;
      for (int c = 0; c < 3; ++c) {
        const uint64_t salt = seed * 4 + 1 + static_cast<uint64_t>(c);
        const double coarse = detail::value_noise_3d(P, 2.0, salt);
        const double fine = detail::value_noise_3d(P, 0.5, salt + 97);
        f.rgb.at(x, y, c) = 0.1 + 0.8 * (0.65 * coarse + 0.35 * fine);
      }
    }
  }
  f.rebuild_valid_mask();
  return f;
}

// World-to-camera pose looking from `center` toward `target`, camera y kept
// close to world +y (image down).
inline Pose look_at(const Eigen::Vector3d& center,
                    const Eigen::Vector3d& target) {
  const Eigen::Vector3d fwd = (target - center).normalized();
  Eigen::Vector3d right = Eigen::Vector3d(0.0, 1.0, 0.0).cross(fwd);
  if (right.norm() < 1e-9) right = Eigen::Vector3d(1.0, 0.0, 0.0);
  right.normalize();
  const Eigen::Vector3d down = fwd.cross(right);
  Eigen::Matrix3d rot_c2w;
  rot_c2w.col(0) = right;
  rot_c2w.col(1) = down;
  rot_c2w.col(2) = fwd;
  Pose p;
  p.q = quat_normalized(rotmat_to_quat(rot_c2w.transpose()));
  p.t = -(rot_c2w.transpose() * center);
  return p;
}

// Uniform-step orbit in the y=0 plane around the origin, always looking at
// the scene center. Timestamps advance at 30 fps. `phase` offsets the start
// angle; a nonzero phase keeps the view axis away from the wall normals of
// make_room_scene, where coplanar splats tie in depth and the compositing
// order is unstable.
inline Trajectory make_orbit_trajectory(int n_frames, double radius,
                                        double angular_span,
                                        double phase = 0.0) {
  if (n_frames < 1) throw DataError("make_orbit_trajectory: n_frames < 1");
  if (!(radius > 0.0)) throw DataError("make_orbit_trajectory: radius <= 0");
  Trajectory traj;
  traj.reserve(n_frames);
  for (int k = 0; k < n_frames; ++k) {
    const double phi =
        phase + (n_frames > 1 ? angular_span * k / (n_frames - 1) : 0.0);
    const Eigen::Vector3d center(radius * std::sin(phi), 0.0,
                                 -radius * std::cos(phi));
    TimedPose tp;
    tp.timestamp = k / 30.0;
    tp.pose = look_at(center, Eigen::Vector3d::Zero());
    traj.push_back(tp);
  }
  return traj;
}

inline FrameSequence render_sequence(const GaussianMap& map,
                                     const Trajectory& traj,
                                     const Intrinsics& K,
                                     const RenderConfig& cfg = {}) {
  FrameSequence frames;
  frames.reserve(traj.size());
  for (const TimedPose& tp : traj) {
    const RenderOutput out = render(map, tp.pose, K, cfg);
    Frame f = make_frame(K.width, K.height, tp.timestamp, K);
    f.rgb = out.rgb;
    f.depth = out.depth;
    f.rebuild_valid_mask();
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace corrgs
