#pragma once

#include <cmath>
#include <vector>

#include "corrgs/pose.hpp"
#include "corrgs/rng.hpp"
#include "corrgs/types.hpp"

namespace corrgs::perturb {

// Benchmark presets: rotation sigma in degrees, translation sigma in meters.
inline constexpr double kMotionSigmaRotDeg[] = {1.0, 3.0, 5.0};
inline constexpr double kMotionSigmaTransM[] = {0.0125, 0.025, 0.05};
inline constexpr int kNumMotionPresets = 3;

// Per pose: R' = R * exp([omega]x) with omega ~ N(0, sigma_rot^2 I) (radians),
// t' = t + N(0, sigma_trans^2 I). Draws run in frame order: 3 rotation
// normals then 3 translation normals per pose.
inline Trajectory deviate_trajectory(const Trajectory& traj,
                                     double sigma_rot_deg,
                                     double sigma_trans_m, RngStream& rng) {
  const double sigma_rot = sigma_rot_deg * M_PI / 180.0;
  Trajectory out;
  out.reserve(traj.size());
  for (const TimedPose& tp : traj) {
    const Eigen::Vector3d omega(sigma_rot * rng.normal(),
                                sigma_rot * rng.normal(),
                                sigma_rot * rng.normal());
    const Eigen::Vector3d dt(sigma_trans_m * rng.normal(),
                             sigma_trans_m * rng.normal(),
                             sigma_trans_m * rng.normal());
    Pose p;
    p.q = quat_normalized(
        quat_multiply(tp.pose.q, rotmat_to_quat(so3_exp(omega))));
    p.t = tp.pose.t + dt;
    out.push_back({tp.timestamp, p});
  }
  return out;
}

// Indices retained by a k-fold speedup: 0, k, 2k, ...
inline std::vector<int> speedup_indices(int n, int k) {
  if (k < 1) throw std::invalid_argument("speedup factor must be >= 1");
  std::vector<int> idx;
  for (int i = 0; i < n; i += k) idx.push_back(i);
  return idx;
}

inline Trajectory speedup_trajectory(const Trajectory& traj, int k) {
  Trajectory out;
  for (int i : speedup_indices(static_cast<int>(traj.size()), k)) {
    out.push_back(traj[i]);
  }
  return out;
}

inline FrameSequence speedup_frames(const FrameSequence& frames, int k) {
  FrameSequence out;
  for (int i : speedup_indices(static_cast<int>(frames.size()), k)) {
    out.push_back(frames[i]);
  }
  return out;
}

}  // namespace corrgs::perturb
