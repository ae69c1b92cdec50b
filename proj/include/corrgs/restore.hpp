#pragma once

#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "corrgs/types.hpp"

namespace corrgs {

// Affine color map f(C) = A*C + b fitted from (observed, rendered) pairs.
struct RestorationModel {
  Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  bool degraded = false;  // too few or degenerate pairs; model is identity
  int pairs = 0;
  double fit_rmse = 0.0;
};

using ColorPair = std::pair<Eigen::Vector3d, Eigen::Vector3d>;  // (C_o, C_r)

// Closed-form ridge least squares of f(C_o) = C_r over the pairs. Returns
// the identity model with the degraded flag when the observed colors do not
// span enough of color space to determine an affine map.
inline RestorationModel fit_restoration(const std::vector<ColorPair>& pairs) {
  RestorationModel model;
  model.pairs = static_cast<int>(pairs.size());
  if (pairs.size() < 8) {
    model.degraded = true;
    return model;
  }

  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const ColorPair& p : pairs) mean += p.first;
  mean /= static_cast<double>(pairs.size());
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const ColorPair& p : pairs) {
    const Eigen::Vector3d d = p.first - mean;
    scatter += d * d.transpose();
  }
  scatter /= static_cast<double>(pairs.size());
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  if (eig.eigenvalues().minCoeff() < 1e-9) {
    model.degraded = true;
    return model;
  }

  Eigen::Matrix4d m = 1e-8 * Eigen::Matrix4d::Identity();
  Eigen::Matrix<double, 4, 3> rhs = Eigen::Matrix<double, 4, 3>::Zero();
  for (const ColorPair& p : pairs) {
    Eigen::Vector4d x;
    x << p.first, 1.0;
    m += x * x.transpose();
    rhs += x * p.second.transpose();
  }
  const Eigen::Matrix<double, 4, 3> w = m.ldlt().solve(rhs);
  model.A = w.topRows<3>().transpose();
  model.b = w.row(3).transpose();

  double sq = 0.0;
  for (const ColorPair& p : pairs) {
    sq += (model.A * p.first + model.b - p.second).squaredNorm();
  }
  model.fit_rmse = std::sqrt(sq / (3.0 * pairs.size()));
  return model;
}

inline Image apply_restoration(const RestorationModel& model,
                               const Image& img) {
  if (img.channels() != 3) {
    throw std::invalid_argument("apply_restoration: need a 3-channel image");
  }
  Image out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Eigen::Vector3d c(img.at(x, y, 0), img.at(x, y, 1),
                              img.at(x, y, 2));
      const Eigen::Vector3d r = model.A * c + model.b;
      for (int k = 0; k < 3; ++k) {
        out.at(x, y, k) = std::clamp(r[k], 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace corrgs
