#pragma once

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "corrgs/pose.hpp"
#include "corrgs/types.hpp"

namespace corrgs::io {

// Depth PNGs store round(meters * 5000) in 16 bits; 0 marks VOID.
inline constexpr double kDepthScale = 5000.0;
inline constexpr double kMaxDepthMeters = 65535.0 / kDepthScale;

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path);
  return f;
}

inline uint8_t to_u8(double v) {
  v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

}  // namespace detail

inline void write_png_rgb8(const std::string& path, const Image& rgb) {
  if (rgb.channels() != 3) throw DataError("write_png_rgb8: need 3 channels");
  const int w = rgb.width(), h = rgb.height();
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        buf[(static_cast<size_t>(y) * w + x) * 3 + c] =
            detail::to_u8(rgb.at(x, y, c));

  detail::FilePtr fp = detail::open_file(path, "wb");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng write failure: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, buf.data() + static_cast<size_t>(y) * w * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Image read_png_rgb8(const std::string& path) {
  detail::FilePtr fp = detail::open_file(path, "rb");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng read failure: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = png_get_image_width(png, info);
  const int h = png_get_image_height(png, info);
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_png_rgb8: unexpected channel count in " + path);
  }
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    png_read_row(png, buf.data() + static_cast<size_t>(y) * w * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image out(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) =
            buf[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
  return out;
}

inline void write_png_depth16(const std::string& path, const Image& depth) {
  if (depth.channels() != 1)
    throw DataError("write_png_depth16: need 1 channel");
  const int w = depth.width(), h = depth.height();
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = depth.at(x, y);
      if (d > kMaxDepthMeters) {
        throw DataError("depth " + std::to_string(d) +
                        " m exceeds 16-bit range at " + path);
      }
      const uint16_t v =
          d == kVoidDepth
              ? 0
              : static_cast<uint16_t>(std::lround(d * kDepthScale));
      buf[(static_cast<size_t>(y) * w + x) * 2] = v >> 8;  // network order
      buf[(static_cast<size_t>(y) * w + x) * 2 + 1] = v & 0xFF;
    }
  }
  detail::FilePtr fp = detail::open_file(path, "wb");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng write failure: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, buf.data() + static_cast<size_t>(y) * w * 2);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Image read_png_depth16(const std::string& path) {
  detail::FilePtr fp = detail::open_file(path, "rb");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng read failure: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_png_depth16: expected 16-bit grayscale at " + path);
  }
  const int w = png_get_image_width(png, info);
  const int h = png_get_image_height(png, info);
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 2);
  for (int y = 0; y < h; ++y)
    png_read_row(png, buf.data() + static_cast<size_t>(y) * w * 2, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const uint16_t v = (static_cast<uint16_t>(
                              buf[(static_cast<size_t>(y) * w + x) * 2])
                          << 8) |
                         buf[(static_cast<size_t>(y) * w + x) * 2 + 1];
      out.at(x, y) = v == 0 ? kVoidDepth : v / kDepthScale;
    }
  }
  return out;
}

// Baseline JPEG round trip, in memory. Input/output are [0,1] RGB images
// quantized to 8 bits at the codec boundary.
inline std::vector<uint8_t> jpeg_encode_rgb8(const Image& rgb, int quality) {
  if (rgb.channels() != 3) throw DataError("jpeg_encode_rgb8: need 3 channels");
  const int w = rgb.width(), h = rgb.height();
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        raw[(static_cast<size_t>(y) * w + x) * 3 + c] =
            detail::to_u8(rgb.at(x, y, c));

  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = w;
  cinfo.image_height = h;
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row =
        raw.data() + static_cast<size_t>(cinfo.next_scanline) * w * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<uint8_t> out(mem, mem + mem_size);
  jpeg_destroy_compress(&cinfo);
  std::free(mem);
  return out;
}

inline Image jpeg_decode_rgb8(const std::vector<uint8_t>& bytes) {
  jpeg_decompress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), bytes.size());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = cinfo.output_width, h = cinfo.output_height;
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row =
        raw.data() + static_cast<size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);

  Image out(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) =
            raw[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
  return out;
}

// --- trajectories (TUM text format, camera-to-world on disk) ---

inline void write_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path);
  f << "# timestamp tx ty tz qx qy qz qw\n";
  char line[512];
  for (const TimedPose& tp : traj) {
    const Pose inv = pose_inverse(tp.pose);  // world-to-camera -> file c2w
    std::snprintf(line, sizeof(line),
                  "%.9f %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  tp.timestamp, inv.t[0], inv.t[1], inv.t[2], inv.q[1],
                  inv.q[2], inv.q[3], inv.q[0]);
    f << line;
  }
  if (!f) throw DataError("write failure: " + path);
}

inline Trajectory read_trajectory(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw DataError("malformed trajectory line " + std::to_string(lineno) +
                      " in " + path);
    }
    std::string extra;
    if (ss >> extra) {
      throw DataError("trailing tokens on trajectory line " +
                      std::to_string(lineno) + " in " + path);
    }
    if (!traj.empty() && ts <= traj.back().timestamp) {
      throw DataError("timestamps not strictly increasing at line " +
                      std::to_string(lineno) + " in " + path);
    }
    Pose c2w;
    c2w.q = quat_normalized(Eigen::Vector4d(qw, qx, qy, qz));
    c2w.t = Eigen::Vector3d(tx, ty, tz);
    traj.push_back({ts, pose_inverse(c2w)});
  }
  return traj;
}

// --- intrinsics ---

inline void write_intrinsics(const std::string& path, const Intrinsics& k) {
  nlohmann::json j{{"fx", k.fx},       {"fy", k.fy},
                   {"cx", k.cx},       {"cy", k.cy},
                   {"width", k.width}, {"height", k.height}};
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path);
  f << j.dump(2) << "\n";
}

inline Intrinsics read_intrinsics(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid intrinsics json " + path + ": " + e.what());
  }
  Intrinsics k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid intrinsics json " + path + ": " + e.what());
  }
  if (k.fx <= 0 || k.fy <= 0 || k.width <= 0 || k.height <= 0) {
    throw DataError("non-positive intrinsics in " + path);
  }
  return k;
}

// --- sequence directories ---
// Layout: rgb/frame_%06d.png, depth/frame_%06d.png, intrinsics.json,
// traj_gt.txt. Frame i pairs with trajectory row i.

struct Sequence {
  FrameSequence frames;
  Trajectory traj;
};

inline std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.png", index);
  return buf;
}

inline void write_sequence(const std::string& dir, const Sequence& seq) {
  namespace fs = std::filesystem;
  if (seq.frames.size() != seq.traj.size()) {
    throw DataError("write_sequence: frame/trajectory count mismatch");
  }
  fs::create_directories(fs::path(dir) / "rgb");
  fs::create_directories(fs::path(dir) / "depth");
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    const Frame& f = seq.frames[i];
    f.check();
    if (std::abs(f.timestamp - seq.traj[i].timestamp) > 1e-9) {
      throw DataError("write_sequence: frame timestamp mismatch at " +
                      std::to_string(i));
    }
    if (!(f.intrinsics == seq.frames[0].intrinsics)) {
      throw DataError("write_sequence: intrinsics differ across frames");
    }
    write_png_rgb8((fs::path(dir) / "rgb" / frame_name(i)).string(), f.rgb);
    write_png_depth16((fs::path(dir) / "depth" / frame_name(i)).string(),
                      f.depth);
  }
  if (!seq.frames.empty()) {
    write_intrinsics((fs::path(dir) / "intrinsics.json").string(),
                     seq.frames[0].intrinsics);
  }
  write_trajectory((fs::path(dir) / "traj_gt.txt").string(), seq.traj);
}

inline Sequence read_sequence(const std::string& dir) {
  namespace fs = std::filesystem;
  Sequence seq;
  seq.traj = read_trajectory((fs::path(dir) / "traj_gt.txt").string());
  const Intrinsics intr =
      read_intrinsics((fs::path(dir) / "intrinsics.json").string());
  seq.frames.reserve(seq.traj.size());
  for (size_t i = 0; i < seq.traj.size(); ++i) {
    Frame f;
    f.timestamp = seq.traj[i].timestamp;
    f.intrinsics = intr;
    f.rgb = read_png_rgb8((fs::path(dir) / "rgb" / frame_name(i)).string());
    f.depth =
        read_png_depth16((fs::path(dir) / "depth" / frame_name(i)).string());
    if (f.rgb.width() != intr.width || f.rgb.height() != intr.height ||
        !f.rgb.same_shape(Image(f.depth.width(), f.depth.height(), 3))) {
      throw DataError("read_sequence: image shape mismatch at frame " +
                      std::to_string(i));
    }
    f.rebuild_valid_mask();
    f.check();
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

// FNV-1a over file bytes; used to compare output trees for exact replay.
inline uint64_t fnv1a_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    const std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<uint8_t>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

inline uint64_t fnv1a_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) {
      files.push_back(fs::relative(e.path(), dir).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  uint64_t h = 0xcbf29ce484222325ull;
  for (const std::string& rel : files) {
    for (char c : rel) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    h ^= fnv1a_file((fs::path(dir) / rel).string());
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace corrgs::io
