#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "corrgs/matcher.hpp"
#include "corrgs/pose.hpp"
#include "corrgs/types.hpp"

namespace corrgs {

// 3D correspondence between a rendered-view point and an observed-view point,
// each in its own camera frame.
struct Correspondence3D {
  Eigen::Vector3d p_r = Eigen::Vector3d::Zero();
  Eigen::Vector3d p_o = Eigen::Vector3d::Zero();
};

// Soft L1: quadratic near zero, linear in the tail.
inline double soft_l1(double s) {
  if (s < 0.0) throw std::invalid_argument("soft_l1: negative input");
  return 2.0 * (std::sqrt(1.0 + 0.5 * s) - 1.0);
}

namespace detail {

// Bilinear depth at a subpixel position; 0 when any support pixel is VOID
// or out of bounds. Nearest-pixel reads misstate grazing surfaces by
// z^2/(f·x_wall) per half pixel, which is centimeters at room scale.
inline double sample_depth(const Image& depth, double u, double v) {
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  if (x0 < 0 || y0 < 0 || x0 + 1 >= depth.width() ||
      y0 + 1 >= depth.height()) {
    return kVoidDepth;
  }
  const double fx = u - x0;
  const double fy = v - y0;
  const double d00 = depth.at(x0, y0);
  const double d10 = depth.at(x0 + 1, y0);
  const double d01 = depth.at(x0, y0 + 1);
  const double d11 = depth.at(x0 + 1, y0 + 1);
  if (d00 == kVoidDepth || d10 == kVoidDepth || d01 == kVoidDepth ||
      d11 == kVoidDepth) {
    return kVoidDepth;
  }
  return (d00 * (1.0 - fx) + d10 * fx) * (1.0 - fy) +
         (d01 * (1.0 - fx) + d11 * fx) * fy;
}

}  // namespace detail

// Back-projects both endpoints of each match through its view's depth map.
// Depth is interpolated bilinearly; matches touching VOID depth or the
// image border on either side are dropped.
inline std::vector<Correspondence3D> lift_matches(
    const std::vector<Match2D>& matches, const Image& depth_r,
    const Image& depth_o, const Intrinsics& K) {
  std::vector<Correspondence3D> out;
  out.reserve(matches.size());
  for (const Match2D& m : matches) {
    const double dr = detail::sample_depth(depth_r, m.ur, m.vr);
    const double dov = detail::sample_depth(depth_o, m.uo, m.vo);
    if (dr == kVoidDepth || dov == kVoidDepth) continue;
    Correspondence3D c;
    c.p_r = Eigen::Vector3d((m.ur - K.cx) / K.fx * dr,
                            (m.vr - K.cy) / K.fy * dr, dr);
    c.p_o = Eigen::Vector3d((m.uo - K.cx) / K.fx * dov,
                            (m.vo - K.cy) / K.fy * dov, dov);
    out.push_back(c);
  }
  return out;
}

// Rigid map from the rendered camera frame to the observed camera frame:
// p_o ~ R(q) p_r + t.
struct RelativePose {
  Eigen::Vector4d q{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d t{0.0, 0.0, 0.0};
  double final_cost = 0.0;
  double inlier_ratio = 1.0;
  int iterations = 0;
};

namespace detail {

inline double robust_cost(const std::vector<Correspondence3D>& corrs,
                          const Eigen::Matrix<double, 6, 1>& theta) {
  const Eigen::Matrix3d R = so3_exp(theta.head<3>());
  const Eigen::Vector3d t = theta.tail<3>();
  double cost = 0.0;
  for (const Correspondence3D& c : corrs) {
    cost += soft_l1((R * c.p_r + t - c.p_o).squaredNorm());
  }
  return cost;
}

inline double soft_l1_weight(double s) {
  return 0.5 / std::sqrt(1.0 + 0.5 * s);
}

// Levenberg-Marquardt on reweighted vector residuals
// f_i = sqrt(rho'(|r_i|^2)) * r_i with the weights frozen per iteration.
// The frozen-weight normal equations share the stationary points of
// sum_i rho(|r_i|^2) but, unlike scalar sqrt(rho) pseudo-residuals, stay
// smooth at zero residual, so clean data converges to machine precision.
// Jacobian by central finite differences over axis-angle + translation;
// steps are accepted on the true robust cost.
inline Eigen::Matrix<double, 6, 1> solve_soft_l1(
    const std::vector<Correspondence3D>& corrs,
    Eigen::Matrix<double, 6, 1> theta, int* iterations) {
  const int n = static_cast<int>(corrs.size());
  const double h = 1e-6;
  double lambda = 1e-3;
  Eigen::VectorXd weights(n);
  auto raw = [&](const Eigen::Matrix<double, 6, 1>& th, Eigen::VectorXd* r) {
    const Eigen::Matrix3d R = so3_exp(th.head<3>());
    const Eigen::Vector3d t = th.tail<3>();
    for (int i = 0; i < n; ++i) {
      r->segment<3>(3 * i) = R * corrs[i].p_r + t - corrs[i].p_o;
    }
  };
  auto weighted = [&](const Eigen::Matrix<double, 6, 1>& th,
                      Eigen::VectorXd* r) {
    raw(th, r);
    for (int i = 0; i < n; ++i) {
      r->segment<3>(3 * i) *= std::sqrt(weights[i]);
    }
  };
  Eigen::VectorXd res(3 * n), rp(3 * n), rm(3 * n);
  Eigen::MatrixXd jac(3 * n, 6);
  double cost = robust_cost(corrs, theta);
  for (int it = 0; it < 100; ++it) {
    if (iterations) *iterations = it + 1;
    raw(theta, &res);
    for (int i = 0; i < n; ++i) {
      weights[i] = soft_l1_weight(res.segment<3>(3 * i).squaredNorm());
      res.segment<3>(3 * i) *= std::sqrt(weights[i]);
    }
    for (int a = 0; a < 6; ++a) {
      Eigen::Matrix<double, 6, 1> tp = theta, tm = theta;
      tp[a] += h;
      tm[a] -= h;
      weighted(tp, &rp);
      weighted(tm, &rm);
      jac.col(a) = (rp - rm) / (2.0 * h);
    }
    const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> jtr = jac.transpose() * res;
    bool stepped = false;
    for (int tries = 0; tries < 10 && !stepped; ++tries) {
      Eigen::Matrix<double, 6, 6> a = jtj;
      a.diagonal().array() += lambda;
      const Eigen::Matrix<double, 6, 1> delta = a.ldlt().solve(-jtr);
      const Eigen::Matrix<double, 6, 1> trial = theta + delta;
      const double trial_cost = robust_cost(corrs, trial);
      if (trial_cost < cost) {
        theta = trial;
        cost = trial_cost;
        lambda = std::max(1e-12, lambda / 3.0);
        stepped = true;
        if (delta.norm() < 1e-10) return theta;
      } else {
        lambda *= 10.0;
      }
    }
    if (!stepped) return theta;
  }
  return theta;
}

}  // namespace detail

// Robust rigid alignment, identity-initialized. After the soft-L1 solve, a
// MAD trim drops gross outliers and the solve is repeated on the kept set.
inline RelativePose solve_relative_pose(
    const std::vector<Correspondence3D>& corrs) {
  if (corrs.size() < 4) {
    throw DataError("solve_relative_pose: need at least 4 correspondences");
  }
  Eigen::Matrix<double, 6, 1> theta = Eigen::Matrix<double, 6, 1>::Zero();
  int iters = 0;
  theta = detail::solve_soft_l1(corrs, theta, &iters);

  Eigen::Matrix3d R = so3_exp(theta.head<3>());
  Eigen::Vector3d t = theta.tail<3>();
  std::vector<double> norms(corrs.size());
  for (size_t i = 0; i < corrs.size(); ++i) {
    norms[i] = (R * corrs[i].p_r + t - corrs[i].p_o).norm();
  }
  std::vector<double> sorted = norms;
  std::sort(sorted.begin(), sorted.end());
  const double med = sorted[sorted.size() / 2];
  std::vector<double> dev(sorted.size());
  for (size_t i = 0; i < sorted.size(); ++i) dev[i] = std::abs(sorted[i] - med);
  std::sort(dev.begin(), dev.end());
  const double mad = dev[dev.size() / 2];
  const double cutoff = med + 3.0 * 1.4826 * mad;

  std::vector<Correspondence3D> kept;
  kept.reserve(corrs.size());
  for (size_t i = 0; i < corrs.size(); ++i) {
    if (norms[i] <= cutoff) kept.push_back(corrs[i]);
  }
  if (kept.size() >= 4 && kept.size() < corrs.size()) {
    int iters2 = 0;
    theta = detail::solve_soft_l1(kept, theta, &iters2);
    iters += iters2;
  } else {
    kept = corrs;
  }

  RelativePose rel;
  rel.q = quat_normalized(rotmat_to_quat(so3_exp(theta.head<3>())));
  rel.t = theta.tail<3>();
  rel.final_cost = detail::robust_cost(kept, theta);
  rel.inlier_ratio = static_cast<double>(kept.size()) / corrs.size();
  rel.iterations = iters;
  return rel;
}

}  // namespace corrgs
