#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "corrgs/pose.hpp"
#include "corrgs/types.hpp"

namespace corrgs {

// Isotropic 3D Gaussian splat.
struct Gaussian {
  Eigen::Vector3d X = Eigen::Vector3d::Zero();  // world position, meters
  double r = 0.01;                              // isotropic radius, meters
  double opacity = 1.0;                         // in [0,1]
  Eigen::Vector3d c = Eigen::Vector3d::Zero();  // rgb, each in [0,1]
};

using GaussianMap = std::vector<Gaussian>;

inline void check_map(const GaussianMap& map) {
  for (const Gaussian& g : map) {
    if (!(g.r > 0.0)) throw DataError("gaussian radius must be > 0");
    if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) {
      throw DataError("gaussian opacity out of [0,1]");
    }
    for (int k = 0; k < 3; ++k) {
      if (!(g.c[k] >= 0.0 && g.c[k] <= 1.0)) {
        throw DataError("gaussian color out of [0,1]");
      }
    }
  }
}

struct RenderConfig {
  double near_plane = 0.01;
  // Pixels farther than support_sigmas * r2d from a splat center are skipped;
  // the dropped mass is below exp(-4.5) of the peak. 0 = unlimited support.
  double support_sigmas = 3.0;
  // Compositing at a pixel stops once transmittance falls below this.
  // 0 = composite every splat. Both zeros give a smooth function of pose,
  // which finite-difference checks rely on.
  double min_transmittance = 1e-4;
  // Residual transmittance is filled with this color: I += T_final * bg.
  // Keeps the color gain at 1 where coverage falls short of saturation;
  // depth and coverage are unaffected.
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

struct RenderOutput {
  Image rgb;       // 3 channels, black background
  Image depth;     // kVoidDepth where coverage is zero
  Image coverage;  // accumulated compositing weight, in [0,1]

  RenderOutput() = default;
  RenderOutput(int w, int h)
      : rgb(w, h, 3, 0.0), depth(w, h, 1, kVoidDepth), coverage(w, h, 1, 0.0) {}
};

struct ProjectedGaussian {
  bool culled = true;
  double mx = 0.0;    // projected center, pixel coords
  double my = 0.0;
  double sigma = 0.0; // 2D radius in pixels
  double d = 0.0;     // camera-space depth
};

namespace detail {

inline ProjectedGaussian project_with_rotmat(const Gaussian& g,
                                             const Eigen::Matrix3d& R,
                                             const Eigen::Vector3d& t,
                                             const Intrinsics& K,
                                             double near_plane) {
  ProjectedGaussian p;
  const Eigen::Vector3d Xc = R * g.X + t;
  if (!(Xc.z() > near_plane)) return p;
  p.culled = false;
  p.d = Xc.z();
  p.mx = K.fx * Xc.x() / Xc.z() + K.cx;
  p.my = K.fy * Xc.y() / Xc.z() + K.cy;
  p.sigma = K.focal_mean() * g.r / Xc.z();
  return p;
}

// Strict weak order for compositing: by depth, ties broken on the splat's
// own attributes so the render never depends on input order.
inline bool composite_before(const GaussianMap& map,
                             const std::vector<ProjectedGaussian>& proj,
                             uint32_t a, uint32_t b) {
  if (proj[a].d != proj[b].d) return proj[a].d < proj[b].d;
  const Gaussian& ga = map[a];
  const Gaussian& gb = map[b];
  return std::make_tuple(ga.X.x(), ga.X.y(), ga.X.z(), ga.r, ga.opacity,
                         ga.c.x(), ga.c.y(), ga.c.z()) <
         std::make_tuple(gb.X.x(), gb.X.y(), gb.X.z(), gb.r, gb.opacity,
                         gb.c.x(), gb.c.y(), gb.c.z());
}

}  // namespace detail

inline ProjectedGaussian project_gaussian(const Gaussian& g, const Pose& pose,
                                          const Intrinsics& K,
                                          double near_plane = 0.01) {
  return detail::project_with_rotmat(g, quat_to_rotmat(pose.q), pose.t, K,
                                     near_plane);
}

// Per-pixel record of what was composited, front to back. Feeds the
// analytical gradient; optional for plain rendering.
struct RenderCache {
  std::vector<ProjectedGaussian> proj;
  std::vector<std::vector<std::pair<uint32_t, double>>> hits;  // (index, f)
};

inline RenderOutput render(const GaussianMap& map, const Pose& pose,
                           const Intrinsics& K, const RenderConfig& cfg = {},
                           RenderCache* cache = nullptr) {
  if (map.empty()) throw DataError("render: empty map");
  if (K.width <= 0 || K.height <= 0) throw DataError("render: bad intrinsics");
  const int w = K.width;
  const int h = K.height;
  RenderOutput out(w, h);

  const Eigen::Matrix3d R = quat_to_rotmat(pose.q);
  std::vector<ProjectedGaussian> proj(map.size());
  std::vector<uint32_t> order;
  order.reserve(map.size());
  for (size_t i = 0; i < map.size(); ++i) {
    proj[i] = detail::project_with_rotmat(map[i], R, pose.t, K,
                                          cfg.near_plane);
    if (!proj[i].culled) order.push_back(static_cast<uint32_t>(i));
  }
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    return detail::composite_before(map, proj, a, b);
  });

  if (cache) {
    cache->proj = proj;
    cache->hits.assign(static_cast<size_t>(w) * h, {});
  }

  std::vector<double> trans(static_cast<size_t>(w) * h, 1.0);
  std::vector<double> cov(static_cast<size_t>(w) * h, 0.0);
  for (uint32_t gi : order) {
    const ProjectedGaussian& pg = proj[gi];
    const Gaussian& g = map[gi];
    int x0 = 0, x1 = w - 1, y0 = 0, y1 = h - 1;
    double support2 = 0.0;
    if (cfg.support_sigmas > 0.0) {
      const double rad = cfg.support_sigmas * pg.sigma;
      support2 = rad * rad;
      x0 = std::max(0, static_cast<int>(std::ceil(pg.mx - rad)));
      x1 = std::min(w - 1, static_cast<int>(std::floor(pg.mx + rad)));
      y0 = std::max(0, static_cast<int>(std::ceil(pg.my - rad)));
      y1 = std::min(h - 1, static_cast<int>(std::floor(pg.my + rad)));
      if (x0 > x1 || y0 > y1) continue;
    }
    const double inv2s2 = 1.0 / (2.0 * pg.sigma * pg.sigma);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const size_t idx = static_cast<size_t>(y) * w + x;
        double& T = trans[idx];
        if (cfg.min_transmittance > 0.0 && T < cfg.min_transmittance) continue;
        const double dx = x - pg.mx;
        const double dy = y - pg.my;
        const double r2 = dx * dx + dy * dy;
        if (support2 > 0.0 && r2 > support2) continue;
        const double f = g.opacity * std::exp(-r2 * inv2s2);
        if (f <= 0.0) continue;
        const double wght = f * T;
        out.rgb.at(x, y, 0) += g.c.x() * wght;
        out.rgb.at(x, y, 1) += g.c.y() * wght;
        out.rgb.at(x, y, 2) += g.c.z() * wght;
        out.depth.at(x, y) += pg.d * wght;
        cov[idx] += wght;
        if (cache) cache->hits[idx].emplace_back(gi, f);
        T *= 1.0 - f;
      }
    }
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t idx = static_cast<size_t>(y) * w + x;
      const double c = cov[idx];
      if (c > 0.0) {
        out.depth.at(x, y) /= c;
        out.coverage.at(x, y) = std::min(c, 1.0);
      } else {
        out.depth.at(x, y) = kVoidDepth;
      }
      for (int ch = 0; ch < 3; ++ch) {
        out.rgb.at(x, y, ch) += trans[idx] * cfg.background[ch];
      }
    }
  }
  return out;
}

inline constexpr double kDefaultTau = 0.5;

// Depth-term pixel set: observation valid and coverage above tau. Freezing
// this mask keeps the loss smooth under small pose perturbations.
inline std::vector<uint8_t> depth_loss_mask(const RenderOutput& out,
                                            const Frame& obs,
                                            double tau = kDefaultTau) {
  const int w = out.coverage.width();
  const int h = out.coverage.height();
  std::vector<uint8_t> mask(static_cast<size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      mask[static_cast<size_t>(y) * w + x] =
          obs.valid_at(x, y) && out.coverage.at(x, y) > tau;
    }
  }
  return mask;
}

// L = lambda_c * sum_valid |I_hat - I|^2 + lambda_d * sum_masked (D_hat - D)^2.
// Color residuals are summed per channel. Pixels with missing observed depth
// contribute to neither term. A caller-provided depth_mask overrides the
// coverage > tau rule (it is still intersected with observation validity).
inline double render_loss(const RenderOutput& out, const Frame& obs,
                          double lambda_c, double lambda_d,
                          double tau = kDefaultTau,
                          const std::vector<uint8_t>* depth_mask = nullptr) {
  const int w = out.rgb.width();
  const int h = out.rgb.height();
  if (obs.rgb.width() != w || obs.rgb.height() != h) {
    throw std::invalid_argument("render_loss: shape mismatch");
  }
  double lc = 0.0;
  double ld = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!obs.valid_at(x, y)) continue;
      for (int c = 0; c < 3; ++c) {
        const double e = out.rgb.at(x, y, c) - obs.rgb.at(x, y, c);
        lc += e * e;
      }
      const bool in_depth =
          depth_mask ? (*depth_mask)[static_cast<size_t>(y) * w + x] != 0
                     : out.coverage.at(x, y) > tau;
      if (in_depth) {
        const double e = out.depth.at(x, y) - obs.depth.at(x, y);
        ld += e * e;
      }
    }
  }
  return lambda_c * lc + lambda_d * ld;
}

// Back-projects under-covered valid pixels into new splats. The splat radius
// matches a 1 px footprint at the pixel's depth; at that width a stride-1
// grid of 0.9-opacity splats absorbs all but ~2e-5 of each ray, so
// re-rendering reproduces both the observed depth and the observed color.
namespace detail {

// Deterministic per-pixel dither in [-1,1).
inline double dither11(uint64_t x, uint64_t y) {
  uint64_t h = (x * 0x9E3779B97F4A7C15ull) ^ (y * 0xC2B2AE3D27D4EB4Full);
  h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ull;
  h = (h ^ (h >> 27)) * 0x94D049BB133111EBull;
  h ^= (h >> 31);
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace detail

// Depth dither applied to densified splats, meters. On a slanted surface the
// front-to-back order of neighboring splats follows the slant, which drags
// the re-rendered texture toward the near side by a fraction of a pixel; the
// dither decorrelates the order from the slant. Small next to the splat
// radius d/f, so compositing weights are unaffected.
inline constexpr double kDensifyDither = 0.005;

inline GaussianMap densify(const GaussianMap& map, const Frame& frame,
                           const Pose& pose, const Image& coverage, double tau,
                           int stride = 1) {
  if (stride < 1) throw std::invalid_argument("densify: stride must be >= 1");
  const Intrinsics& K = frame.intrinsics;
  const Eigen::Matrix3d Rt = quat_to_rotmat(pose.q).transpose();
  GaussianMap out = map;
  for (int y = 0; y < K.height; y += stride) {
    for (int x = 0; x < K.width; x += stride) {
      if (!frame.valid_at(x, y)) continue;
      if (coverage.at(x, y) >= tau) continue;
      const double d =
          frame.depth.at(x, y) + kDensifyDither * detail::dither11(x, y);
      const Eigen::Vector3d Xc((x - K.cx) / K.fx * d, (y - K.cy) / K.fy * d,
                               d);
      Gaussian g;
      g.X = Rt * (Xc - pose.t);
      g.r = 0.5 * d / K.focal_mean();
      g.opacity = 0.9;
      g.c = Eigen::Vector3d(frame.rgb.at(x, y, 0), frame.rgb.at(x, y, 1),
                            frame.rgb.at(x, y, 2));
      out.push_back(g);
    }
  }
  return out;
}

inline void save_map(const GaussianMap& map, const std::string& path) {
  nlohmann::json rows = nlohmann::json::array();
  for (const Gaussian& g : map) {
    rows.push_back({g.X.x(), g.X.y(), g.X.z(), g.r, g.opacity, g.c.x(),
                    g.c.y(), g.c.z()});
  }
  nlohmann::json j;
  j["gaussians"] = std::move(rows);
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << j.dump() << "\n";
}

inline GaussianMap load_map(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (!j.contains("gaussians") || !j["gaussians"].is_array()) {
    throw DataError(path + ": missing gaussians array");
  }
  GaussianMap map;
  map.reserve(j["gaussians"].size());
  for (const auto& row : j["gaussians"]) {
    if (!row.is_array() || row.size() != 8) {
      throw DataError(path + ": gaussian row must have 8 numbers");
    }
    Gaussian g;
    g.X = Eigen::Vector3d(row[0].get<double>(), row[1].get<double>(),
                          row[2].get<double>());
    g.r = row[3].get<double>();
    g.opacity = row[4].get<double>();
    g.c = Eigen::Vector3d(row[5].get<double>(), row[6].get<double>(),
                          row[7].get<double>());
    map.push_back(g);
  }
  check_map(map);
  return map;
}

}  // namespace corrgs
