#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace corrgs {

// Sentinel depth for pixels with no measurement. Exact comparison is
// intentional: producers write exactly 0.0, never a rounded value.
inline constexpr double kVoidDepth = 0.0;

// Raised on malformed or inconsistent input data (files, manifests, frames).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when tracking cannot continue (reactive fallback exhausted).
class TrackingError : public std::runtime_error {
 public:
  explicit TrackingError(const std::string& what) : std::runtime_error(what) {}
};

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  double focal_mean() const { return 0.5 * (fx + fy); }

  bool operator==(const Intrinsics& o) const {
    return fx == o.fx && fy == o.fy && cx == o.cx && cy == o.cy &&
           width == o.width && height == o.height;
  }
};

// Dense row-major image, interleaved channels, double precision.
// RGB images use 3 channels in [0,1]; depth images use 1 channel in meters.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<size_t>(width) * height * channels, fill) {
    if (width <= 0 || height <= 0 || channels <= 0) {
      throw std::invalid_argument("Image: non-positive dimensions");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  double& at(int x, int y, int c = 0) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& pixels() { return data_; }
  const std::vector<double>& pixels() const { return data_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ &&
           channels_ == o.channels_;
  }

  Image clamped(double lo = 0.0, double hi = 1.0) const {
    Image out = *this;
    for (double& v : out.data_) v = v < lo ? lo : (v > hi ? hi : v);
    return out;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
};

// One RGB-D observation. The valid mask mirrors depth VOIDs exactly:
// valid(x,y) == false  <=>  depth(x,y) == kVoidDepth.
struct Frame {
  double timestamp = 0.0;
  Image rgb;
  Image depth;
  std::vector<uint8_t> valid;
  Intrinsics intrinsics;

  bool valid_at(int x, int y) const {
    return valid[static_cast<size_t>(y) * depth.width() + x] != 0;
  }

  void set_depth(int x, int y, double d) {
    depth.at(x, y) = d;
    valid[static_cast<size_t>(y) * depth.width() + x] = (d != kVoidDepth);
  }

  void set_void(int x, int y) { set_depth(x, y, kVoidDepth); }

  void rebuild_valid_mask() {
    valid.assign(static_cast<size_t>(depth.width()) * depth.height(), 0);
    for (int y = 0; y < depth.height(); ++y) {
      for (int x = 0; x < depth.width(); ++x) {
        valid[static_cast<size_t>(y) * depth.width() + x] =
            (depth.at(x, y) != kVoidDepth);
      }
    }
  }

  // Throws if shapes or the valid/VOID correspondence are broken.
  void check() const {
    if (rgb.channels() != 3 || depth.channels() != 1) {
      throw DataError("Frame: rgb must have 3 channels, depth 1");
    }
    if (rgb.width() != depth.width() || rgb.height() != depth.height()) {
      throw DataError("Frame: rgb/depth shape mismatch");
    }
    if (valid.size() != static_cast<size_t>(depth.width()) * depth.height()) {
      throw DataError("Frame: valid mask size mismatch");
    }
    for (int y = 0; y < depth.height(); ++y) {
      for (int x = 0; x < depth.width(); ++x) {
        const bool v = valid_at(x, y);
        const double d = depth.at(x, y);
        if (v != (d != kVoidDepth)) {
          throw DataError("Frame: valid mask disagrees with VOID depths");
        }
        if (v && d <= 0.0) {
          throw DataError("Frame: non-VOID depth must be positive");
        }
      }
    }
  }
};

inline Frame make_frame(int width, int height, double timestamp,
                        const Intrinsics& intr) {
  Frame f;
  f.timestamp = timestamp;
  f.rgb = Image(width, height, 3, 0.0);
  f.depth = Image(width, height, 1, kVoidDepth);
  f.valid.assign(static_cast<size_t>(width) * height, 0);
  f.intrinsics = intr;
  return f;
}

using FrameSequence = std::vector<Frame>;

}  // namespace corrgs
