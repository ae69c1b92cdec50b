#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "corrgs/perturb_rgb.hpp"
#include "corrgs/rng.hpp"
#include "corrgs/types.hpp"

namespace corrgs::perturb {

enum class DepthKind {
  kGaussianNoise,
  kEdgeErosion,
  kRandomMissing,
  kRangeClipping,
};

inline constexpr int kNumDepthKinds = 4;

inline const char* depth_kind_name(DepthKind k) {
  switch (k) {
    case DepthKind::kGaussianNoise: return "gaussian_noise";
    case DepthKind::kEdgeErosion: return "edge_erosion";
    case DepthKind::kRandomMissing: return "random_missing";
    case DepthKind::kRangeClipping: return "range_clipping";
  }
  throw std::invalid_argument("unknown depth kind");
}

inline DepthKind depth_kind_from_name(const std::string& name) {
  for (int i = 0; i < kNumDepthKinds; ++i) {
    const DepthKind k = static_cast<DepthKind>(i);
    if (name == depth_kind_name(k)) return k;
  }
  throw DataError("unknown depth perturbation kind: " + name);
}

struct RangeClipParams {
  double min_depth, max_depth;
};

inline double depth_gaussian_scale(int level) {
  detail::check_level(level);
  constexpr double t[] = {0.1, 0.2, 0.3, 0.4, 0.5};
  return t[level - 1];
}

inline double edge_erosion_rate(int level) {
  detail::check_level(level);
  constexpr double t[] = {0.015, 0.020, 0.025, 0.030, 0.035};
  return t[level - 1];
}

inline double random_missing_percent(int level) {
  detail::check_level(level);
  constexpr double t[] = {10, 15, 20, 25, 30};
  return t[level - 1];
}

inline RangeClipParams range_clipping_params(int level) {
  detail::check_level(level);
  constexpr RangeClipParams t[] = {
      {0.2, 4.4}, {0.3, 4.2}, {0.4, 4.0}, {0.5, 3.8}, {0.6, 3.6}};
  return t[level - 1];
}

inline std::vector<std::pair<std::string, double>> depth_perturb_params(
    DepthKind kind, int level) {
  using P = std::pair<std::string, double>;
  switch (kind) {
    case DepthKind::kGaussianNoise:
      return {P{"scale", depth_gaussian_scale(level)}};
    case DepthKind::kEdgeErosion:
      return {P{"rate", edge_erosion_rate(level)}};
    case DepthKind::kRandomMissing:
      return {P{"percent", random_missing_percent(level)}};
    case DepthKind::kRangeClipping: {
      const RangeClipParams p = range_clipping_params(level);
      return {P{"min_depth", p.min_depth}, P{"max_depth", p.max_depth}};
    }
  }
  throw std::invalid_argument("unknown depth kind");
}

// Additive noise on valid pixels only; the valid mask is preserved exactly,
// so noised values are floored at 1 mm rather than voided.
inline Image apply_depth_gaussian_noise(const Image& depth, double scale,
                                        RngStream& rng) {
  Image out = depth;
  for (double& v : out.pixels()) {
    if (v != kVoidDepth) v = std::max(1e-3, v + scale * rng.normal());
  }
  return out;
}

// Voids the strongest depth discontinuities: pixels whose Sobel magnitude
// reaches the (1 - rate) quantile of nonzero magnitudes, plus one dilation
// ring around them. Ties at the quantile are all eroded.
inline Image apply_edge_erosion(const Image& depth, double rate) {
  const int w = depth.width(), h = depth.height();
  Image mag(w, h, 1, 0.0);
  std::vector<double> nonzero;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool ok = true;
      for (int j = -1; j <= 1 && ok; ++j)
        for (int i = -1; i <= 1 && ok; ++i) {
          const int xx = x + i, yy = y + j;
          ok = xx >= 0 && xx < w && yy >= 0 && yy < h &&
               depth.at(xx, yy) != kVoidDepth;
        }
      if (!ok) continue;
      const double gx = (depth.at(x + 1, y - 1) + 2 * depth.at(x + 1, y) +
                         depth.at(x + 1, y + 1)) -
                        (depth.at(x - 1, y - 1) + 2 * depth.at(x - 1, y) +
                         depth.at(x - 1, y + 1));
      const double gy = (depth.at(x - 1, y + 1) + 2 * depth.at(x, y + 1) +
                         depth.at(x + 1, y + 1)) -
                        (depth.at(x - 1, y - 1) + 2 * depth.at(x, y - 1) +
                         depth.at(x + 1, y - 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      mag.at(x, y) = m;
      if (m > 0.0) nonzero.push_back(m);
    }
  }
  if (nonzero.empty()) return depth;
  std::sort(nonzero.begin(), nonzero.end());
  const double q = std::clamp(1.0 - rate, 0.0, 1.0);
  const size_t idx = static_cast<size_t>(q * (nonzero.size() - 1));
  const double threshold = nonzero[idx];

  std::vector<uint8_t> seed(static_cast<size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      seed[static_cast<size_t>(y) * w + x] = mag.at(x, y) >= threshold;

  Image out = depth;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool hit = false;
      for (int j = -1; j <= 1 && !hit; ++j)
        for (int i = -1; i <= 1 && !hit; ++i) {
          const int xx = x + i, yy = y + j;
          hit = xx >= 0 && xx < w && yy >= 0 && yy < h &&
                seed[static_cast<size_t>(yy) * w + xx];
        }
      if (hit) out.at(x, y) = kVoidDepth;
    }
  }
  return out;
}

// Voids axis-aligned rectangles (sides 8..64 px) until the newly masked
// fraction of all pixels reaches percent/100.
inline Image apply_random_missing(const Image& depth, double percent,
                                  RngStream& rng) {
  const int w = depth.width(), h = depth.height();
  Image out = depth;
  const size_t total = static_cast<size_t>(w) * h;
  const size_t target = static_cast<size_t>(std::llround(percent / 100.0 *
                                                         total));
  size_t voided = 0;
  const int max_rects = 100000;
  for (int r = 0; r < max_rects && voided < target; ++r) {
    const int rw = std::min(w, 8 + rng.uniform_int(57));  // 8..64
    const int rh = std::min(h, 8 + rng.uniform_int(57));
    const int x0 = rng.uniform_int(w - rw + 1);
    const int y0 = rng.uniform_int(h - rh + 1);
    for (int y = y0; y < y0 + rh; ++y) {
      for (int x = x0; x < x0 + rw; ++x) {
        if (out.at(x, y) != kVoidDepth) {
          out.at(x, y) = kVoidDepth;
          ++voided;
        }
      }
    }
  }
  return out;
}

// Depths outside [min, max] become VOID (sensor range limits).
inline Image apply_range_clipping(const Image& depth, double min_depth,
                                  double max_depth) {
  Image out = depth;
  for (double& v : out.pixels()) {
    if (v != kVoidDepth && (v < min_depth || v > max_depth)) v = kVoidDepth;
  }
  return out;
}

inline Image apply_depth_perturb(const Image& depth, DepthKind kind, int level,
                                 RngStream& rng) {
  detail::check_level(level);
  if (depth.channels() != 1) {
    throw std::invalid_argument("apply_depth_perturb: need a 1-channel image");
  }
  switch (kind) {
    case DepthKind::kGaussianNoise:
      return apply_depth_gaussian_noise(depth, depth_gaussian_scale(level),
                                        rng);
    case DepthKind::kEdgeErosion:
      return apply_edge_erosion(depth, edge_erosion_rate(level));
    case DepthKind::kRandomMissing:
      return apply_random_missing(depth, random_missing_percent(level), rng);
    case DepthKind::kRangeClipping: {
      const RangeClipParams p = range_clipping_params(level);
      return apply_range_clipping(depth, p.min_depth, p.max_depth);
    }
  }
  throw std::invalid_argument("unknown depth kind");
}

}  // namespace corrgs::perturb
