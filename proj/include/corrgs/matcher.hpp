#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include <Eigen/Dense>

#include "corrgs/pose.hpp"
#include "corrgs/rng.hpp"
#include "corrgs/splat.hpp"
#include "corrgs/types.hpp"

namespace corrgs {

// A putative pixel correspondence between the rendered and observed views.
struct Match2D {
  double ur = 0.0;
  double vr = 0.0;
  double uo = 0.0;
  double vo = 0.0;
  double confidence = 1.0;
};

// Everything a matcher may look at. The rendered output is produced at
// render_pose; the observed frame carries its timestamp and intrinsics.
struct MatchContext {
  const GaussianMap* map = nullptr;
  Pose render_pose;
  const RenderOutput* rendered = nullptr;
  const Frame* observed = nullptr;
};

class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual std::vector<Match2D> match(const MatchContext& ctx) = 0;
};

struct OracleMatcherConfig {
  double sigma_px = 0.0;
  double outlier_frac = 0.0;
  int max_matches = 200;
  uint64_t seed = 0;
};

// Projects a sampled subset of the map into both views, the observed one
// through the ground-truth trajectory. Stands in for a learned matcher;
// noise and outliers are injected on top of perfect geometry.
class OracleMatcher : public Matcher {
 public:
  OracleMatcher(Trajectory gt, const OracleMatcherConfig& cfg = {})
      : gt_(std::move(gt)), cfg_(cfg) {}

  std::vector<Match2D> match(const MatchContext& ctx) override {
    std::vector<Match2D> out;
    if (!ctx.map || !ctx.observed) return out;
    const Frame& obs = *ctx.observed;
    const TimedPose* gt = nullptr;
    for (const TimedPose& tp : gt_) {
      if (std::abs(tp.timestamp - obs.timestamp) < 1e-9) {
        gt = &tp;
        break;
      }
    }
    if (!gt) return out;

    uint64_t ts_bits = 0;
    std::memcpy(&ts_bits, &obs.timestamp, sizeof(ts_bits));
    RngStream rng(cfg_.seed, ts_bits, 2);

    const Intrinsics& K = obs.intrinsics;
    const size_t n = ctx.map->size();
    const size_t stride = std::max<size_t>(1, n / std::max(1, cfg_.max_matches));
    for (size_t i = 0; i < n && out.size() <
         static_cast<size_t>(cfg_.max_matches); i += stride) {
      const Gaussian& g = (*ctx.map)[i];
      const ProjectedGaussian pr =
          project_gaussian(g, ctx.render_pose, K);
      const ProjectedGaussian po = project_gaussian(g, gt->pose, K);
      if (pr.culled || po.culled) continue;
      Match2D m;
      m.ur = pr.mx + cfg_.sigma_px * rng.normal();
      m.vr = pr.my + cfg_.sigma_px * rng.normal();
      m.uo = po.mx + cfg_.sigma_px * rng.normal();
      m.vo = po.my + cfg_.sigma_px * rng.normal();
      if (rng.uniform() < cfg_.outlier_frac) {
        m.uo = rng.uniform() * (K.width - 1);
        m.vo = rng.uniform() * (K.height - 1);
      }
      m.confidence = 1.0;
      if (m.ur < 0 || m.ur > K.width - 1 || m.vr < 0 || m.vr > K.height - 1)
        continue;
      if (m.uo < 0 || m.uo > K.width - 1 || m.vo < 0 || m.vo > K.height - 1)
        continue;
      out.push_back(m);
    }
    return out;
  }

 private:
  Trajectory gt_;
  OracleMatcherConfig cfg_;
};

struct PatchMatcherConfig {
  int max_corners = 300;
  double harris_k = 0.04;
  double quality = 0.01;   // keep corners above quality * max response
  int nms_radius = 3;
  int patch_radius = 5;    // 11x11 ZNCC patches
  int search_radius = 12;
  double min_zncc = 0.6;
};

namespace detail {

inline Image luminance(const Image& rgb) {
  Image g(rgb.width(), rgb.height(), 1, 0.0);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      g.at(x, y) = 0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) +
                   0.114 * rgb.at(x, y, 2);
    }
  }
  return g;
}

// Zero-mean normalized cross-correlation of two square patches; returns -2
// if either patch leaves its image or has no contrast.
inline double zncc(const Image& a, int ax, int ay, const Image& b, int bx,
                   int by, int radius) {
  if (ax < radius || ay < radius || ax >= a.width() - radius ||
      ay >= a.height() - radius || bx < radius || by < radius ||
      bx >= b.width() - radius || by >= b.height() - radius) {
    return -2.0;
  }
  const int n = (2 * radius + 1) * (2 * radius + 1);
  double ma = 0.0, mb = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      ma += a.at(ax + dx, ay + dy);
      mb += b.at(bx + dx, by + dy);
    }
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const double va = a.at(ax + dx, ay + dy) - ma;
      const double vb = b.at(bx + dx, by + dy) - mb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
    }
  }
  if (saa < 1e-12 || sbb < 1e-12) return -2.0;
  return sab / std::sqrt(saa * sbb);
}

struct Corner {
  int x;
  int y;
  double response;
};

inline std::vector<Corner> harris_corners(const Image& gray,
                                          const PatchMatcherConfig& cfg) {
  const int w = gray.width();
  const int h = gray.height();
  Image ixx(w, h, 1, 0.0), iyy(w, h, 1, 0.0), ixy(w, h, 1, 0.0);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double gx = 0.5 * (gray.at(x + 1, y) - gray.at(x - 1, y));
      const double gy = 0.5 * (gray.at(x, y + 1) - gray.at(x, y - 1));
      ixx.at(x, y) = gx * gx;
      iyy.at(x, y) = gy * gy;
      ixy.at(x, y) = gx * gy;
    }
  }
  Image resp(w, h, 1, 0.0);
  double max_resp = 0.0;
  for (int y = 2; y < h - 2; ++y) {
    for (int x = 2; x < w - 2; ++x) {
      double sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          sxx += ixx.at(x + dx, y + dy);
          syy += iyy.at(x + dx, y + dy);
          sxy += ixy.at(x + dx, y + dy);
        }
      }
      const double det = sxx * syy - sxy * sxy;
      const double tr = sxx + syy;
      const double r = det - cfg.harris_k * tr * tr;
      resp.at(x, y) = r;
      max_resp = std::max(max_resp, r);
    }
  }
  std::vector<Corner> corners;
  const double thr = cfg.quality * max_resp;
  if (max_resp <= 0.0) return corners;
  for (int y = 2; y < h - 2; ++y) {
    for (int x = 2; x < w - 2; ++x) {
      const double r = resp.at(x, y);
      if (r < thr) continue;
      bool is_max = true;
      for (int dy = -cfg.nms_radius; dy <= cfg.nms_radius && is_max; ++dy) {
        for (int dx = -cfg.nms_radius; dx <= cfg.nms_radius && is_max; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          if (resp.at(xx, yy) > r) is_max = false;
        }
      }
      if (is_max) corners.push_back({x, y, r});
    }
  }
  std::sort(corners.begin(), corners.end(),
            [](const Corner& a, const Corner& b) {
              if (a.response != b.response) return a.response > b.response;
              return a.y != b.y ? a.y < b.y : a.x < b.x;
            });
  if (corners.size() > static_cast<size_t>(cfg.max_corners)) {
    corners.resize(cfg.max_corners);
  }
  return corners;
}

}  // namespace detail

// Harris corners in the rendered view, matched into the observed view by
// ZNCC over a local search window, kept only when the reverse search lands
// back on the corner (mutual best).
class PatchMatcher : public Matcher {
 public:
  explicit PatchMatcher(const PatchMatcherConfig& cfg = {}) : cfg_(cfg) {}

  std::vector<Match2D> match(const MatchContext& ctx) override {
    std::vector<Match2D> out;
    if (!ctx.rendered || !ctx.observed) return out;
    const Image gr = detail::luminance(ctx.rendered->rgb);
    const Image go = detail::luminance(ctx.observed->rgb);
    const std::vector<detail::Corner> corners =
        detail::harris_corners(gr, cfg_);
    for (const detail::Corner& c : corners) {
      int best_x = -1, best_y = -1;
      double best = -2.0;
      for (int dy = -cfg_.search_radius; dy <= cfg_.search_radius; ++dy) {
        for (int dx = -cfg_.search_radius; dx <= cfg_.search_radius; ++dx) {
          const double s =
              detail::zncc(gr, c.x, c.y, go, c.x + dx, c.y + dy,
                           cfg_.patch_radius);
          if (s > best) {
            best = s;
            best_x = c.x + dx;
            best_y = c.y + dy;
          }
        }
      }
      if (best < cfg_.min_zncc) continue;
      // Mutual-best check: search back from the observed location.
      int back_x = -1, back_y = -1;
      double back_best = -2.0;
      for (int dy = -cfg_.search_radius; dy <= cfg_.search_radius; ++dy) {
        for (int dx = -cfg_.search_radius; dx <= cfg_.search_radius; ++dx) {
          const double s = detail::zncc(go, best_x, best_y, gr, best_x + dx,
                                        best_y + dy, cfg_.patch_radius);
          if (s > back_best) {
            back_best = s;
            back_x = best_x + dx;
            back_y = best_y + dy;
          }
        }
      }
      if (std::abs(back_x - c.x) > 1 || std::abs(back_y - c.y) > 1) continue;
      Match2D m;
      m.ur = c.x;
      m.vr = c.y;
      m.uo = best_x;
      m.vo = best_y;
      m.confidence = std::max(0.0, best);
      out.push_back(m);
    }
    return out;
  }

 private:
  PatchMatcherConfig cfg_;
};

}  // namespace corrgs
