#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "corrgs/io.hpp"
#include "corrgs/rng.hpp"
#include "corrgs/types.hpp"

namespace corrgs::perturb {

enum class PerturbMode { kStatic, kDynamic };

enum class RgbKind {
  kGaussianNoise,
  kShotNoise,
  kImpulseNoise,
  kSpeckleNoise,
  kDefocusBlur,
  kGlassBlur,
  kMotionBlur,
  kGaussianBlur,
  kSnow,
  kFrost,
  kFog,
  kSpatter,
  kBrightness,
  kContrast,
  kJpeg,
  kPixelate,
};

inline constexpr int kNumRgbKinds = 16;
inline constexpr int kNumLevels = 5;

inline const char* rgb_kind_name(RgbKind k) {
  switch (k) {
    case RgbKind::kGaussianNoise: return "gaussian_noise";
    case RgbKind::kShotNoise: return "shot_noise";
    case RgbKind::kImpulseNoise: return "impulse_noise";
    case RgbKind::kSpeckleNoise: return "speckle_noise";
    case RgbKind::kDefocusBlur: return "defocus_blur";
    case RgbKind::kGlassBlur: return "glass_blur";
    case RgbKind::kMotionBlur: return "motion_blur";
    case RgbKind::kGaussianBlur: return "gaussian_blur";
    case RgbKind::kSnow: return "snow";
    case RgbKind::kFrost: return "frost";
    case RgbKind::kFog: return "fog";
    case RgbKind::kSpatter: return "spatter";
    case RgbKind::kBrightness: return "brightness";
    case RgbKind::kContrast: return "contrast";
    case RgbKind::kJpeg: return "jpeg";
    case RgbKind::kPixelate: return "pixelate";
  }
  throw std::invalid_argument("unknown rgb kind");
}

inline RgbKind rgb_kind_from_name(const std::string& name) {
  for (int i = 0; i < kNumRgbKinds; ++i) {
    const RgbKind k = static_cast<RgbKind>(i);
    if (name == rgb_kind_name(k)) return k;
  }
  throw DataError("unknown rgb perturbation kind: " + name);
}

namespace detail {
inline void check_level(int level) {
  if (level < 1 || level > kNumLevels) {
    throw std::invalid_argument("perturbation level must be in [1,5], got " +
                                std::to_string(level));
  }
}
}  // namespace detail

// --- severity tables, one row per level 1..5 ---

struct SnowParams {
  double mean, stddev, scale, threshold, blur_radius, blur_std, blend;
};
struct FrostParams {
  double intensity, texture_influence;
};
struct FogParams {
  double thickness, smoothness;
};
struct SpatterParams {
  double mean, stddev, sigma, threshold, scaling;
  int complexity;
};
struct DefocusParams {
  double radius, alias_blur;
};
struct GlassParams {
  double sigma, max_delta;
  int iterations;
};
struct MotionBlurParams {
  double radius, sigma;
};

inline double gaussian_noise_scale(int level) {
  detail::check_level(level);
  constexpr double t[] = {0.08, 0.12, 0.18, 0.26, 0.38};
  return t[level - 1];
}

inline double shot_photon_number(int level) {
  detail::check_level(level);
  constexpr double t[] = {60, 25, 12, 5, 3};
  return t[level - 1];
}

inline double impulse_amount(int level) {
  detail::check_level(level);
  constexpr double t[] = {0.03, 0.06, 0.09, 0.17, 0.27};
  return t[level - 1];
}

inline double speckle_scale(int level) {
  detail::check_level(level);
  constexpr double t[] = {0.15, 0.2, 0.35, 0.45, 0.6};
  return t[level - 1];
}

inline DefocusParams defocus_params(int level) {
  detail::check_level(level);
  constexpr DefocusParams t[] = {
      {3.0, 0.1}, {4.0, 0.5}, {6.0, 0.5}, {8.0, 0.5}, {10.0, 0.5}};
  return t[level - 1];
}

inline GlassParams glass_params(int level) {
  detail::check_level(level);
  constexpr GlassParams t[] = {
      {0.7, 1.0, 2}, {0.9, 2.0, 1}, {1.0, 2.0, 3}, {1.1, 3.0, 2}, {1.5, 4.0, 2}};
  return t[level - 1];
}

inline MotionBlurParams motion_blur_params(int level) {
  detail::check_level(level);
  constexpr MotionBlurParams t[] = {{10, 3}, {15, 5}, {15, 8}, {15, 12}, {20, 15}};
  return t[level - 1];
}

inline double gaussian_blur_sigma(int level) {
  detail::check_level(level);
  constexpr double t[] = {1, 2, 3, 4, 6};
  return t[level - 1];
}

inline SnowParams snow_params(int level) {
  detail::check_level(level);
  constexpr SnowParams t[] = {{0.1, 0.3, 3.0, 0.5, 10.0, 4.0, 0.8},
                              {0.2, 0.3, 2.0, 0.5, 12.0, 4.0, 0.7},
                              {0.55, 0.3, 4.0, 0.9, 12.0, 8.0, 0.7},
                              {0.55, 0.3, 4.5, 0.85, 12.0, 8.0, 0.65},
                              {0.55, 0.3, 2.5, 0.85, 12.0, 12.0, 0.55}};
  return t[level - 1];
}

inline FrostParams frost_params(int level) {
  detail::check_level(level);
  constexpr FrostParams t[] = {
      {1.00, 0.40}, {0.80, 0.60}, {0.70, 0.70}, {0.65, 0.70}, {0.60, 0.75}};
  return t[level - 1];
}

inline FogParams fog_params(int level) {
  detail::check_level(level);
  constexpr FogParams t[] = {
      {1.5, 2.0}, {2.0, 2.0}, {2.5, 1.7}, {2.5, 1.5}, {3.0, 1.4}};
  return t[level - 1];
}

inline SpatterParams spatter_params(int level) {
  detail::check_level(level);
  constexpr SpatterParams t[] = {{0.65, 0.3, 4.0, 0.69, 0.6, 0},
                                 {0.65, 0.3, 3.0, 0.68, 0.6, 0},
                                 {0.65, 0.3, 2.0, 0.68, 0.5, 0},
                                 {0.65, 0.3, 1.0, 0.65, 1.5, 1},
                                 {0.67, 0.4, 1.0, 0.65, 1.5, 1}};
  return t[level - 1];
}

inline double brightness_ratio(int level) {
  detail::check_level(level);
  constexpr double t[] = {0.1, 0.2, 0.3, 0.4, 0.5};
  return t[level - 1];
}

inline double contrast_beta(int level) {
  detail::check_level(level);
  constexpr double t[] = {0.40, 0.30, 0.20, 0.10, 0.05};
  return t[level - 1];
}

inline int jpeg_quality(int level) {
  detail::check_level(level);
  constexpr int t[] = {25, 18, 15, 10, 7};
  return t[level - 1];
}

inline double pixelate_factor(int level) {
  detail::check_level(level);
  constexpr double t[] = {0.60, 0.50, 0.40, 0.30, 0.25};
  return t[level - 1];
}

// Named parameter dump for a (kind, level) cell; used by table checks.
inline std::vector<std::pair<std::string, double>> rgb_perturb_params(
    RgbKind kind, int level) {
  using P = std::pair<std::string, double>;
  switch (kind) {
    case RgbKind::kGaussianNoise:
      return {P{"scale", gaussian_noise_scale(level)}};
    case RgbKind::kShotNoise:
      return {P{"photon_number", shot_photon_number(level)}};
    case RgbKind::kImpulseNoise:
      return {P{"amount", impulse_amount(level)}};
    case RgbKind::kSpeckleNoise:
      return {P{"scale", speckle_scale(level)}};
    case RgbKind::kDefocusBlur: {
      const DefocusParams p = defocus_params(level);
      return {P{"kernel_radius", p.radius}, P{"alias_blur", p.alias_blur}};
    }
    case RgbKind::kGlassBlur: {
      const GlassParams p = glass_params(level);
      return {P{"sigma", p.sigma}, P{"max_delta", p.max_delta},
              P{"iterations", static_cast<double>(p.iterations)}};
    }
    case RgbKind::kMotionBlur: {
      const MotionBlurParams p = motion_blur_params(level);
      return {P{"radius", p.radius}, P{"sigma", p.sigma}};
    }
    case RgbKind::kGaussianBlur:
      return {P{"sigma", gaussian_blur_sigma(level)}};
    case RgbKind::kSnow: {
      const SnowParams p = snow_params(level);
      return {P{"mean", p.mean},
              P{"std", p.stddev},
              P{"scale", p.scale},
              P{"threshold", p.threshold},
              P{"blur_radius", p.blur_radius},
              P{"blur_std", p.blur_std},
              P{"blending_ratio", p.blend}};
    }
    case RgbKind::kFrost: {
      const FrostParams p = frost_params(level);
      return {P{"intensity", p.intensity},
              P{"texture_influence", p.texture_influence}};
    }
    case RgbKind::kFog: {
      const FogParams p = fog_params(level);
      return {P{"thickness", p.thickness}, P{"smoothness", p.smoothness}};
    }
    case RgbKind::kSpatter: {
      const SpatterParams p = spatter_params(level);
      return {P{"mean", p.mean},
              P{"std", p.stddev},
              P{"sigma", p.sigma},
              P{"threshold", p.threshold},
              P{"scaling", p.scaling},
              P{"complexity", static_cast<double>(p.complexity)}};
    }
    case RgbKind::kBrightness:
      return {P{"ratio", brightness_ratio(level)}};
    case RgbKind::kContrast:
      return {P{"beta", contrast_beta(level)}};
    case RgbKind::kJpeg:
      return {P{"quality", static_cast<double>(jpeg_quality(level))}};
    case RgbKind::kPixelate:
      return {P{"resize_factor", pixelate_factor(level)}};
  }
  throw std::invalid_argument("unknown rgb kind");
}

// --- image-processing helpers ---

namespace detail {

inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -1 - i;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

inline std::vector<double> gaussian_kernel_1d(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

inline Image convolve_separable(const Image& img, const std::vector<double>& k) {
  const int w = img.width(), h = img.height(), ch = img.channels();
  const int radius = static_cast<int>(k.size() / 2);
  Image tmp(w, h, ch), out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[i + radius] * img.at(reflect_index(x + i, w), y, c);
        }
        tmp.at(x, y, c) = acc;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[i + radius] * tmp.at(x, reflect_index(y + i, h), c);
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

inline Image gaussian_blur_image(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  return convolve_separable(img, gaussian_kernel_1d(sigma));
}

// Dense 2D kernel convolution with reflected borders.
inline Image convolve_2d(const Image& img, const std::vector<double>& kernel,
                         int kw, int kh) {
  const int w = img.width(), h = img.height(), ch = img.channels();
  const int rx = kw / 2, ry = kh / 2;
  Image out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int j = 0; j < kh; ++j) {
          const int yy = reflect_index(y + j - ry, h);
          for (int i = 0; i < kw; ++i) {
            acc += kernel[static_cast<size_t>(j) * kw + i] *
                   img.at(reflect_index(x + i - rx, w), yy, c);
          }
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

// Disk of the given radius, softened by a small Gaussian, normalized to 1.
inline std::vector<double> disk_kernel(double radius, double alias_blur,
                                       int* side_out) {
  const int r = std::max(1, static_cast<int>(std::ceil(radius)));
  const int side = 2 * r + 1;
  Image k(side, side, 1, 0.0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double dx = x - r, dy = y - r;
      if (dx * dx + dy * dy <= radius * radius) k.at(x, y) = 1.0;
    }
  }
  Image soft = gaussian_blur_image(k, alias_blur);
  double sum = 0.0;
  for (double v : soft.pixels()) sum += v;
  std::vector<double> out = soft.pixels();
  for (double& v : out) v /= sum;
  *side_out = side;
  return out;
}

// Line kernel along the given angle with Gaussian weights along its length.
inline std::vector<double> line_kernel(double radius, double sigma,
                                       double angle, int* side_out) {
  const int r = std::max(1, static_cast<int>(std::lround(radius)));
  const int side = 2 * r + 1;
  std::vector<double> k(static_cast<size_t>(side) * side, 0.0);
  const double c = std::cos(angle), s = std::sin(angle);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const int x = r + static_cast<int>(std::lround(i * c));
    const int y = r + static_cast<int>(std::lround(i * s));
    const double wgt = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<size_t>(y) * side + x] += wgt;
    sum += wgt;
  }
  for (double& v : k) v /= sum;
  *side_out = side;
  return k;
}

// Bilinear upsample of a coarse field to the target size.
inline Image upsample_bilinear(const Image& low, int w, int h) {
  Image out(w, h, low.channels());
  const int lw = low.width(), lh = low.height();
  for (int y = 0; y < h; ++y) {
    const double fy = lh == 1 ? 0.0 : static_cast<double>(y) * (lh - 1) / (h - 1);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, lh - 1);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx =
          lw == 1 ? 0.0 : static_cast<double>(x) * (lw - 1) / (w - 1);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, lw - 1);
      const double tx = fx - x0;
      for (int c = 0; c < low.channels(); ++c) {
        const double a = low.at(x0, y0, c) * (1 - tx) + low.at(x1, y0, c) * tx;
        const double b = low.at(x0, y1, c) * (1 - tx) + low.at(x1, y1, c) * tx;
        out.at(x, y, c) = a * (1 - ty) + b * ty;
      }
    }
  }
  return out;
}

inline double hash01(uint64_t x, uint64_t y, uint64_t salt) {
  uint64_t z = salt ^ (x * 0x9E3779B97F4A7C15ull) ^
               (y * 0xC2B2AE3D27D4EB4Full);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= (z >> 31);
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Lattice value noise in [0,1], cell size in pixels.
inline double value_noise(double x, double y, int cell, uint64_t salt) {
  const double gx = x / cell, gy = y / cell;
  const int ix = static_cast<int>(std::floor(gx));
  const int iy = static_cast<int>(std::floor(gy));
  const double tx = smoothstep(gx - ix), ty = smoothstep(gy - iy);
  const double v00 = hash01(ix, iy, salt), v10 = hash01(ix + 1, iy, salt);
  const double v01 = hash01(ix, iy + 1, salt),
               v11 = hash01(ix + 1, iy + 1, salt);
  const double a = v00 * (1 - tx) + v10 * tx;
  const double b = v01 * (1 - tx) + v11 * tx;
  return a * (1 - ty) + b * ty;
}

// Diamond-square plasma fractal, normalized to [0,1]. The decay factor
// divides the perturbation amplitude at each halving (higher = smoother).
inline Image plasma_fractal(int w, int h, double decay, RngStream& rng) {
  int size = 1;
  while (size < std::max(w, h)) size <<= 1;
  const int side = size + 1;
  Image g(side, side, 1, 0.0);
  g.at(0, 0) = rng.uniform();
  g.at(size, 0) = rng.uniform();
  g.at(0, size) = rng.uniform();
  g.at(size, size) = rng.uniform();
  double amp = 1.0;
  for (int step = size; step > 1; step /= 2) {
    const int half = step / 2;
    for (int y = half; y < side; y += step) {
      for (int x = half; x < side; x += step) {
        const double avg = 0.25 * (g.at(x - half, y - half) +
                                   g.at(x + half, y - half) +
                                   g.at(x - half, y + half) +
                                   g.at(x + half, y + half));
        g.at(x, y) = avg + amp * (rng.uniform() - 0.5);
      }
    }
    for (int y = 0; y < side; y += half) {
      for (int x = (y / half) % 2 == 0 ? half : 0; x < side; x += step) {
        double sum = 0.0;
        int cnt = 0;
        if (x - half >= 0) { sum += g.at(x - half, y); ++cnt; }
        if (x + half < side) { sum += g.at(x + half, y); ++cnt; }
        if (y - half >= 0) { sum += g.at(x, y - half); ++cnt; }
        if (y + half < side) { sum += g.at(x, y + half); ++cnt; }
        g.at(x, y) = sum / cnt + amp * (rng.uniform() - 0.5);
      }
    }
    amp /= decay;
  }
  double lo = g.at(0, 0), hi = g.at(0, 0);
  for (double v : g.pixels()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Image out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = (g.at(x, y) - lo) / std::max(1e-12, hi - lo);
  return out;
}

inline constexpr double kSnowAngle = 1.9;  // radians, slanted fall direction

}  // namespace detail

// --- functional forms (parameter-level API, reused by the severity tables) ---

inline Image apply_gaussian_noise(const Image& img, double scale,
                                  RngStream& rng) {
  Image out = img;
  for (double& v : out.pixels()) v += scale * rng.normal();
  return out.clamped();
}

inline Image apply_shot_noise(const Image& img, double photon_number,
                              RngStream& rng) {
  Image out = img;
  for (double& v : out.pixels()) {
    v = rng.poisson(std::max(0.0, v) * photon_number) / photon_number;
  }
  return out.clamped();
}

inline Image apply_impulse_noise(const Image& img, double amount,
                                 RngStream& rng) {
  Image out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double u = rng.uniform();
      if (u < 0.5 * amount) {
        for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = 0.0;
      } else if (u < amount) {
        for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = 1.0;
      }
    }
  }
  return out;
}

inline Image apply_speckle_noise(const Image& img, double scale,
                                 RngStream& rng) {
  Image out = img;
  for (double& v : out.pixels()) v *= 1.0 + scale * rng.normal();
  return out.clamped();
}

inline Image apply_defocus_blur(const Image& img, double radius,
                                double alias_blur) {
  int side = 0;
  const std::vector<double> k = detail::disk_kernel(radius, alias_blur, &side);
  return detail::convolve_2d(img, k, side, side);
}

inline Image apply_glass_blur(const Image& img, double sigma, double max_delta,
                              int iterations, RngStream& rng) {
  Image out = img;
  const int d = std::max(1, static_cast<int>(std::lround(max_delta)));
  for (int it = 0; it < iterations; ++it) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const int dx = rng.uniform_int(2 * d + 1) - d;
        const int dy = rng.uniform_int(2 * d + 1) - d;
        const int x2 = std::clamp(x + dx, 0, img.width() - 1);
        const int y2 = std::clamp(y + dy, 0, img.height() - 1);
        for (int c = 0; c < img.channels(); ++c) {
          std::swap(out.at(x, y, c), out.at(x2, y2, c));
        }
      }
    }
  }
  return detail::gaussian_blur_image(out, sigma);
}

inline Image apply_motion_blur(const Image& img, double radius, double sigma,
                               double angle) {
  int side = 0;
  const std::vector<double> k = detail::line_kernel(radius, sigma, angle, &side);
  return detail::convolve_2d(img, k, side, side);
}

inline Image apply_gaussian_blur(const Image& img, double sigma) {
  return detail::gaussian_blur_image(img, sigma);
}

inline Image apply_snow(const Image& img, const SnowParams& p, RngStream& rng) {
  const int w = img.width(), h = img.height();
  const int lw = std::max(1, static_cast<int>(std::lround(w / p.scale)));
  const int lh = std::max(1, static_cast<int>(std::lround(h / p.scale)));
  Image field(lw, lh, 1);
  for (double& v : field.pixels()) v = rng.normal(p.mean, p.stddev);
  Image flakes = detail::upsample_bilinear(field, w, h);
  for (double& v : flakes.pixels()) {
    v = std::clamp((v - p.threshold) / std::max(1e-6, 1.0 - p.threshold), 0.0,
                   1.0);
  }
  const Image streaks = apply_motion_blur(flakes, p.blur_radius, p.blur_std,
                                          detail::kSnowAngle);
  Image out = img;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = std::clamp((1.0 - p.blend) * streaks.at(x, y), 0.0, 1.0);
      for (int c = 0; c < img.channels(); ++c) {
        out.at(x, y, c) = img.at(x, y, c) * (1.0 - a) + a;
      }
    }
  }
  return out.clamped();
}

inline Image apply_frost(const Image& img, const FrostParams& p,
                         RngStream& rng) {
  const uint64_t s1 = rng.next_u64(), s2 = rng.next_u64(),
                 s3 = rng.next_u64();
  Image out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double t = 0.55 * detail::value_noise(x, y, 32, s1) +
                       0.30 * detail::value_noise(x, y, 12, s2) +
                       0.15 * detail::value_noise(x, y, 4, s3);
      for (int c = 0; c < img.channels(); ++c) {
        out.at(x, y, c) = p.intensity * img.at(x, y, c) +
                          p.texture_influence * t;
      }
    }
  }
  return out.clamped();
}

inline Image apply_fog(const Image& img, const FogParams& p, RngStream& rng) {
  const Image plasma =
      detail::plasma_fractal(img.width(), img.height(), p.smoothness, rng);
  Image out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double a = 1.0 - std::exp(-p.thickness * plasma.at(x, y));
      for (int c = 0; c < img.channels(); ++c) {
        out.at(x, y, c) = (1.0 - a) * img.at(x, y, c) + a * 0.5;
      }
    }
  }
  return out.clamped();
}

inline Image apply_spatter(const Image& img, const SpatterParams& p,
                           RngStream& rng) {
  const int w = img.width(), h = img.height();
  Image field(w, h, 1);
  for (double& v : field.pixels()) v = rng.normal(p.mean, p.stddev);
  const Image blurred = detail::gaussian_blur_image(field, p.sigma);
  // Water droplets below complexity 1, mud above.
  const double layer[2][3] = {{0.75, 0.85, 0.95}, {0.45, 0.35, 0.25}};
  const double* col = layer[p.complexity == 0 ? 0 : 1];
  Image out = img;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m =
          std::clamp((blurred.at(x, y) - p.threshold) * 8.0, 0.0, 1.0);
      const double a = std::clamp(p.scaling * m, 0.0, 1.0);
      for (int c = 0; c < img.channels(); ++c) {
        out.at(x, y, c) = (1.0 - a) * img.at(x, y, c) + a * col[c];
      }
    }
  }
  return out.clamped();
}

inline Image apply_brightness(const Image& img, double ratio) {
  Image out = img;
  for (double& v : out.pixels()) v += ratio;
  return out.clamped();
}

// Scales intensities about the per-channel mean J: out = beta*(v-J) + J.
inline Image apply_contrast(const Image& img, double beta) {
  std::vector<double> mean(img.channels(), 0.0);
  const size_t n = static_cast<size_t>(img.width()) * img.height();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) mean[c] += img.at(x, y, c);
  for (double& m : mean) m /= static_cast<double>(n);
  Image out = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c)
        out.at(x, y, c) = beta * (img.at(x, y, c) - mean[c]) + mean[c];
  return out.clamped();
}

inline Image apply_jpeg(const Image& img, int quality) {
  return io::jpeg_decode_rgb8(io::jpeg_encode_rgb8(img, quality));
}

inline Image apply_pixelate(const Image& img, double factor) {
  const int w = img.width(), h = img.height();
  const int lw = std::max(1, static_cast<int>(std::lround(w * factor)));
  const int lh = std::max(1, static_cast<int>(std::lround(h * factor)));
  Image low(lw, lh, img.channels(), 0.0);
  for (int j = 0; j < lh; ++j) {
    const int y0 = static_cast<int>(static_cast<int64_t>(j) * h / lh);
    const int y1 = static_cast<int>(static_cast<int64_t>(j + 1) * h / lh);
    for (int i = 0; i < lw; ++i) {
      const int x0 = static_cast<int>(static_cast<int64_t>(i) * w / lw);
      const int x1 = static_cast<int>(static_cast<int64_t>(i + 1) * w / lw);
      for (int c = 0; c < img.channels(); ++c) {
        double acc = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) acc += img.at(x, y, c);
        low.at(i, j, c) = acc / ((y1 - y0) * (x1 - x0));
      }
    }
  }
  Image out(w, h, img.channels());
  for (int y = 0; y < h; ++y) {
    const int j = std::min(lh - 1, static_cast<int>(static_cast<int64_t>(y) * lh / h));
    for (int x = 0; x < w; ++x) {
      const int i = std::min(lw - 1, static_cast<int>(static_cast<int64_t>(x) * lw / w));
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = low.at(i, j, c);
    }
  }
  return out;
}

// Severity-table dispatch. The stream must be keyed by the caller with
// (seed, frame, perturbation id); static mode keys every frame identically.
inline Image apply_rgb_perturb(const Image& img, RgbKind kind, int level,
                               RngStream& rng,
                               PerturbMode mode = PerturbMode::kStatic) {
  detail::check_level(level);
  if (img.channels() != 3) {
    throw std::invalid_argument("apply_rgb_perturb: need a 3-channel image");
  }
  switch (kind) {
    case RgbKind::kGaussianNoise:
      return apply_gaussian_noise(img, gaussian_noise_scale(level), rng);
    case RgbKind::kShotNoise:
      return apply_shot_noise(img, shot_photon_number(level), rng);
    case RgbKind::kImpulseNoise:
      return apply_impulse_noise(img, impulse_amount(level), rng);
    case RgbKind::kSpeckleNoise:
      return apply_speckle_noise(img, speckle_scale(level), rng);
    case RgbKind::kDefocusBlur: {
      const DefocusParams p = defocus_params(level);
      return apply_defocus_blur(img, p.radius, p.alias_blur);
    }
    case RgbKind::kGlassBlur: {
      const GlassParams p = glass_params(level);
      return apply_glass_blur(img, p.sigma, p.max_delta, p.iterations, rng);
    }
    case RgbKind::kMotionBlur: {
      const MotionBlurParams p = motion_blur_params(level);
      const double angle = mode == PerturbMode::kDynamic
                               ? rng.uniform(0.0, M_PI)
                               : M_PI / 4.0;
      return apply_motion_blur(img, p.radius, p.sigma, angle);
    }
    case RgbKind::kGaussianBlur:
      return apply_gaussian_blur(img, gaussian_blur_sigma(level));
    case RgbKind::kSnow:
      return apply_snow(img, snow_params(level), rng);
    case RgbKind::kFrost:
      return apply_frost(img, frost_params(level), rng);
    case RgbKind::kFog:
      return apply_fog(img, fog_params(level), rng);
    case RgbKind::kSpatter:
      return apply_spatter(img, spatter_params(level), rng);
    case RgbKind::kBrightness:
      return apply_brightness(img, brightness_ratio(level));
    case RgbKind::kContrast:
      return apply_contrast(img, contrast_beta(level));
    case RgbKind::kJpeg:
      return apply_jpeg(img, jpeg_quality(level));
    case RgbKind::kPixelate:
      return apply_pixelate(img, pixelate_factor(level));
  }
  throw std::invalid_argument("unknown rgb kind");
}

}  // namespace corrgs::perturb
