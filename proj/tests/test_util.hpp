#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "corrgs/rng.hpp"
#include "corrgs/types.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<uint64_t> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("corrgs_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const {
    return (path / name).string();
  }
};

// RGB image whose values lie exactly on the 8-bit grid.
inline corrgs::Image random_rgb8_image(int w, int h, corrgs::RngStream& rng) {
  corrgs::Image img(w, h, 3);
  for (double& v : img.pixels()) v = rng.uniform_int(256) / 255.0;
  return img;
}

// Depth image on the 16-bit quantization grid with some VOID pixels.
inline corrgs::Image random_depth_image(int w, int h, corrgs::RngStream& rng,
                                        double void_fraction = 0.1) {
  corrgs::Image img(w, h, 1);
  for (double& v : img.pixels()) {
    if (rng.uniform() < void_fraction) {
      v = corrgs::kVoidDepth;
    } else {
      v = (1 + rng.uniform_int(40000)) / 5000.0;  // (0, 8] m
    }
  }
  return img;
}

// Smooth low-frequency test pattern, useful when noise must dominate.
inline corrgs::Image gradient_rgb_image(int w, int h) {
  corrgs::Image img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = 0.2 + 0.6 * x / std::max(1, w - 1);
      img.at(x, y, 1) = 0.2 + 0.6 * y / std::max(1, h - 1);
      img.at(x, y, 2) = 0.5 + 0.3 * std::sin(0.15 * x) * std::cos(0.2 * y);
    }
  }
  return img;
}

}  // namespace testutil
