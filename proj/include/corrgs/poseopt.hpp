#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "corrgs/pose.hpp"
#include "corrgs/splat.hpp"
#include "corrgs/types.hpp"

namespace corrgs {

struct LossParams {
  double lambda_c = 0.5;
  double lambda_d = 1.0;
  double tau = kDefaultTau;
};

struct PoseGradient {
  Eigen::Vector4d dq = Eigen::Vector4d::Zero();
  Eigen::Vector3d dt = Eigen::Vector3d::Zero();
  double loss = 0.0;
};

namespace detail {

// d(R(q)X)/dq_a for the quaternion-to-matrix map exactly as implemented in
// quat_to_rotmat (no normalization), so finite differences on raw components
// agree. Tangent projection happens at the update step, not here.
inline void quat_point_jacobian(const Eigen::Vector4d& q,
                                const Eigen::Vector3d& X,
                                Eigen::Vector3d v[4]) {
  const double r = q[0], i = q[1], j = q[2], k = q[3];
  const double x = X.x(), y = X.y(), z = X.z();
  v[0] = 2.0 * Eigen::Vector3d(j * z - k * y, k * x - i * z, i * y - j * x);
  v[1] = 2.0 * Eigen::Vector3d(j * y + k * z, j * x - 2.0 * i * y - r * z,
                               k * x + r * y - 2.0 * i * z);
  v[2] = 2.0 * Eigen::Vector3d(i * y - 2.0 * j * x + r * z, i * x + k * z,
                               -r * x + k * y - 2.0 * j * z);
  v[3] = 2.0 * Eigen::Vector3d(-2.0 * k * x + i * z - r * y,
                               r * x - 2.0 * k * y + j * z, i * x + j * y);
}

}  // namespace detail

// Analytical gradient of render_loss w.r.t. the raw pose parameters, by a
// backward sweep over the per-pixel compositing records. Suffix sums give
// d(sum a_i w_i)/df_k = T_k (a_k - acc_k) without dividing by (1 - f).
// A caller-provided depth_mask freezes the depth-term pixel set.
inline PoseGradient pose_gradient(const GaussianMap& map, const Pose& pose,
                                  const Frame& obs, const LossParams& lp = {},
                                  const RenderConfig& rc = {},
                                  const std::vector<uint8_t>* depth_mask =
                                      nullptr) {
  const Intrinsics& K = obs.intrinsics;
  RenderCache cache;
  const RenderOutput out = render(map, pose, K, rc, &cache);

  PoseGradient g;
  g.loss = render_loss(out, obs, lp.lambda_c, lp.lambda_d, lp.tau, depth_mask);

  std::vector<Eigen::Vector2d> gm(map.size(), Eigen::Vector2d::Zero());
  std::vector<double> gsig(map.size(), 0.0);
  std::vector<double> gd(map.size(), 0.0);

  std::vector<double> trans_prefix;
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      if (!obs.valid_at(x, y)) continue;
      const size_t idx = static_cast<size_t>(y) * K.width + x;
      const auto& hits = cache.hits[idx];
      if (hits.empty()) continue;

      trans_prefix.assign(hits.size(), 1.0);
      double cov = 0.0;
      double sd = 0.0;
      double T = 1.0;
      for (size_t k = 0; k < hits.size(); ++k) {
        trans_prefix[k] = T;
        const double w = hits[k].second * T;
        cov += w;
        sd += cache.proj[hits[k].first].d * w;
        T *= 1.0 - hits[k].second;
      }

      double gi_c[3];
      for (int c = 0; c < 3; ++c) {
        gi_c[c] = 2.0 * lp.lambda_c * (out.rgb.at(x, y, c) - obs.rgb.at(x, y, c));
      }
      const bool in_depth =
          depth_mask ? (*depth_mask)[idx] != 0 : out.coverage.at(x, y) > lp.tau;
      double gs = 0.0;
      double gc = 0.0;
      if (in_depth && cov > 0.0) {
        const double dhat = sd / cov;
        const double gdep = 2.0 * lp.lambda_d * (dhat - obs.depth.at(x, y));
        gs = gdep / cov;
        gc = -gdep * dhat / cov;
      }

      // Seeding the suffix composite with the background reproduces its
      // T_final term in d(rgb)/df exactly.
      Eigen::Vector3d acc_c = rc.background;
      double acc_d = 0.0;
      double acc_w = 0.0;
      for (size_t k = hits.size(); k-- > 0;) {
        const uint32_t gix = hits[k].first;
        const double f = hits[k].second;
        const double Tk = trans_prefix[k];
        const ProjectedGaussian& pg = cache.proj[gix];
        const Gaussian& gau = map[gix];

        double dldf = 0.0;
        for (int c = 0; c < 3; ++c) dldf += gi_c[c] * (gau.c[c] - acc_c[c]);
        dldf += gs * (pg.d - acc_d) + gc * (1.0 - acc_w);
        dldf *= Tk;

        const double dx = x - pg.mx;
        const double dy = y - pg.my;
        const double inv_s2 = 1.0 / (pg.sigma * pg.sigma);
        gm[gix].x() += dldf * f * dx * inv_s2;
        gm[gix].y() += dldf * f * dy * inv_s2;
        gsig[gix] += dldf * f * (dx * dx + dy * dy) * inv_s2 / pg.sigma;
        gd[gix] += gs * f * Tk;

        acc_c = gau.c * f + (1.0 - f) * acc_c;
        acc_d = pg.d * f + (1.0 - f) * acc_d;
        acc_w = f + (1.0 - f) * acc_w;
      }
    }
  }

  const Eigen::Matrix3d R = quat_to_rotmat(pose.q);
  Eigen::Vector3d v[4];
  for (size_t i = 0; i < map.size(); ++i) {
    if (cache.proj[i].culled) continue;
    if (gm[i].isZero(0.0) && gsig[i] == 0.0 && gd[i] == 0.0) continue;
    const Eigen::Vector3d Xc = R * map[i].X + pose.t;
    const double z = Xc.z();
    const Eigen::Vector3d gxc(
        gm[i].x() * K.fx / z, gm[i].y() * K.fy / z,
        -gm[i].x() * K.fx * Xc.x() / (z * z) -
            gm[i].y() * K.fy * Xc.y() / (z * z) -
            gsig[i] * cache.proj[i].sigma / z + gd[i]);
    g.dt += gxc;
    detail::quat_point_jacobian(pose.q, map[i].X, v);
    for (int a = 0; a < 4; ++a) g.dq[a] += gxc.dot(v[a]);
  }
  return g;
}

inline Eigen::Vector4d tangent_project(const Eigen::Vector4d& dq,
                                       const Eigen::Vector4d& q) {
  return dq - dq.dot(q) * q;
}

struct RefineConfig {
  int iters = 200;
  double lr_rot = 1e-4;
  double lr_trans = 2e-3;
  LossParams loss;
  RenderConfig render;
};

struct RefineResult {
  Pose pose;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> history;  // raw loss at each iterate, init first
};

// Plain gradient descent on the rendering loss. Returns the best pose seen,
// not the last one, so an overshooting step cannot worsen the result.
inline RefineResult refine_pose(const GaussianMap& map, const Pose& init,
                                const Frame& obs,
                                const RefineConfig& cfg = {}) {
  RefineResult res;
  res.pose = init;
  Pose cur = init;
  for (int k = 0; k < cfg.iters; ++k) {
    const PoseGradient grad =
        pose_gradient(map, cur, obs, cfg.loss, cfg.render);
    res.history.push_back(grad.loss);
    if (grad.loss < res.best_loss) {
      res.best_loss = grad.loss;
      res.pose = cur;
    }
    const Eigen::Vector4d step = tangent_project(grad.dq, cur.q);
    cur.q = quat_normalized(cur.q - cfg.lr_rot * step);
    cur.t -= cfg.lr_trans * grad.dt;
  }
  const RenderOutput out = render(map, cur, obs.intrinsics, cfg.render);
  const double final_loss =
      render_loss(out, obs, cfg.loss.lambda_c, cfg.loss.lambda_d,
                  cfg.loss.tau);
  res.history.push_back(final_loss);
  if (final_loss < res.best_loss) {
    res.best_loss = final_loss;
    res.pose = cur;
  }
  return res;
}

}  // namespace corrgs
