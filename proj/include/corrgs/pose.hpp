#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "corrgs/types.hpp"

namespace corrgs {

// Rigid camera pose in world-to-camera form: X_cam = R(q) * X_world + t.
// q = (qr, qi, qj, qk), unit norm, canonical sign qr >= 0. Trajectory files
// on disk store the camera-to-world inverse (TUM convention); conversion
// happens at the I/O boundary only.
struct Pose {
  Eigen::Vector4d q{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d t{0.0, 0.0, 0.0};
};

inline Eigen::Matrix3d quat_to_rotmat(const Eigen::Vector4d& q) {
  const double qr = q[0], qi = q[1], qj = q[2], qk = q[3];
  Eigen::Matrix3d r;
  r << 0.5 - (qj * qj + qk * qk), qi * qj - qr * qk, qi * qk + qr * qj,
      qi * qj + qr * qk, 0.5 - (qi * qi + qk * qk), qj * qk - qr * qi,
      qi * qk - qr * qj, qj * qk + qr * qi, 0.5 - (qi * qi + qj * qj);
  return 2.0 * r;
}

inline Eigen::Matrix3d rotation(const Pose& p) { return quat_to_rotmat(p.q); }

inline Eigen::Vector3d transform_point(const Pose& p,
                                       const Eigen::Vector3d& x) {
  return quat_to_rotmat(p.q) * x + p.t;
}

inline Eigen::Vector4d quat_canonicalized(Eigen::Vector4d q) {
  if (q[0] < 0.0 ||
      (q[0] == 0.0 && (q[1] < 0.0 || (q[1] == 0.0 && (q[2] < 0.0 ||
      (q[2] == 0.0 && q[3] < 0.0)))))) {
    q = -q;
  }
  return q;
}

inline Eigen::Vector4d quat_normalized(const Eigen::Vector4d& q) {
  return quat_canonicalized(q / q.norm());
}

inline Pose pose_normalized(Pose p) {
  p.q = quat_normalized(p.q);
  return p;
}

// Hamilton product a*b (rotation a applied after rotation b).
inline Eigen::Vector4d quat_multiply(const Eigen::Vector4d& a,
                                     const Eigen::Vector4d& b) {
  return Eigen::Vector4d(
      a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
      a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
      a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
      a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

// compose(a, b): apply b first, then a (matrix product T_a * T_b).
inline Pose pose_compose(const Pose& a, const Pose& b) {
  Pose out;
  out.q = quat_normalized(quat_multiply(a.q, b.q));
  out.t = quat_to_rotmat(a.q) * b.t + a.t;
  return out;
}

inline Pose pose_inverse(const Pose& p) {
  Pose out;
  out.q = quat_canonicalized(
      Eigen::Vector4d(p.q[0], -p.q[1], -p.q[2], -p.q[3]));
  out.t = -(quat_to_rotmat(p.q).transpose() * p.t);
  return out;
}

// Camera position in world coordinates.
inline Eigen::Vector3d camera_center(const Pose& p) {
  return -(quat_to_rotmat(p.q).transpose() * p.t);
}

// Shepperd's method; robust for all rotation matrices.
inline Eigen::Vector4d rotmat_to_quat(const Eigen::Matrix3d& r) {
  Eigen::Vector4d q;
  const double tr = r.trace();
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q << 0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s,
        (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    q << (r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s,
        (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    q << (r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s,
        (r(1, 2) + r(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    q << (r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s,
        (r(1, 2) + r(2, 1)) / s, 0.25 * s;
  }
  return quat_normalized(q);
}

inline Pose pose_from_rt(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
  Pose p;
  p.q = rotmat_to_quat(r);
  p.t = t;
  return p;
}

inline Eigen::Matrix4d pose_to_matrix(const Pose& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = quat_to_rotmat(p.q);
  m.topRightCorner<3, 1>() = p.t;
  return m;
}

// Rodrigues rotation from an axis-angle vector.
inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Eigen::Matrix3d k;
    k << 0, -omega[2], omega[1], omega[2], 0, -omega[0], -omega[1], omega[0],
        0;
    return Eigen::Matrix3d::Identity() + k;
  }
  const Eigen::Vector3d a = omega / theta;
  Eigen::Matrix3d k;
  k << 0, -a[2], a[1], a[2], 0, -a[0], -a[1], a[0], 0;
  return Eigen::Matrix3d::Identity() + std::sin(theta) * k +
         (1.0 - std::cos(theta)) * k * k;
}

inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const Eigen::Vector4d q = rotmat_to_quat(r);
  const Eigen::Vector3d v(q[1], q[2], q[3]);
  const double n = v.norm();
  if (n < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(n, q[0]);
  return (angle / n) * v;
}

// Rotation from exp([omega]x); translation applied directly (no V matrix).
inline Pose se3_exp(const Eigen::Vector3d& omega, const Eigen::Vector3d& v) {
  Pose p = pose_from_rt(so3_exp(omega), v);
  return p;
}

inline double rotation_angle(const Eigen::Matrix3d& r) {
  return so3_log(r).norm();
}

// Geodesic angle between the rotations of two poses, radians.
inline double rotation_error(const Pose& a, const Pose& b) {
  return rotation_angle(quat_to_rotmat(a.q).transpose() * quat_to_rotmat(b.q));
}

inline double translation_error(const Pose& a, const Pose& b) {
  return (camera_center(a) - camera_center(b)).norm();
}

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

using Trajectory = std::vector<TimedPose>;

}  // namespace corrgs
