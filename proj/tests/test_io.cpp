#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "corrgs/io.hpp"
#include "corrgs/pose.hpp"
#include "corrgs/rng.hpp"
#include "test_util.hpp"

using namespace corrgs;
using testutil::TempDir;

TEST_CASE("png rgb8 round trip is exact on the 8-bit grid", "[io]") {
  TempDir tmp("png");
  RngStream rng(1, 0, 0);
  const Image img = testutil::random_rgb8_image(37, 21, rng);
  io::write_png_rgb8(tmp.sub("a.png"), img);
  const Image back = io::read_png_rgb8(tmp.sub("a.png"));
  REQUIRE(back.same_shape(img));
  for (size_t i = 0; i < img.size(); ++i) {
    REQUIRE(back.pixels()[i] == img.pixels()[i]);
  }
}

TEST_CASE("png depth16 round trip within quantization, VOID exact", "[io]") {
  TempDir tmp("png16");
  RngStream rng(2, 0, 0);
  Image depth = testutil::random_depth_image(33, 17, rng);
  depth.at(0, 0) = kVoidDepth;
  depth.at(5, 5) = 2.00012345;  // off-grid, must quantize within 1e-4
  io::write_png_depth16(tmp.sub("d.png"), depth);
  const Image back = io::read_png_depth16(tmp.sub("d.png"));
  REQUIRE(back.same_shape(depth));
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (depth.at(x, y) == kVoidDepth) {
        REQUIRE(back.at(x, y) == kVoidDepth);
      } else {
        REQUIRE(std::abs(back.at(x, y) - depth.at(x, y)) <= 1e-4);
      }
    }
  }
}

TEST_CASE("depth beyond the 16-bit range is rejected", "[io]") {
  TempDir tmp("png16r");
  Image depth(4, 4, 1, 2.0);
  depth.at(1, 1) = 13.2;  // above 65535/5000 m
  REQUIRE_THROWS_AS(io::write_png_depth16(tmp.sub("d.png"), depth), DataError);
  depth.at(1, 1) = 13.1;
  REQUIRE_NOTHROW(io::write_png_depth16(tmp.sub("d.png"), depth));
}

TEST_CASE("jpeg codec round trip degrades with quality", "[io]") {
  const Image img = testutil::gradient_rgb_image(64, 48);
  auto mse = [&](int quality) {
    const Image back = io::jpeg_decode_rgb8(io::jpeg_encode_rgb8(img, quality));
    REQUIRE(back.same_shape(img));
    double acc = 0.0;
    for (size_t i = 0; i < img.size(); ++i) {
      const double d = back.pixels()[i] - img.pixels()[i];
      acc += d * d;
    }
    return acc / img.size();
  };
  const double hi = mse(95), lo = mse(7);
  REQUIRE(hi < 1e-4);     // near-lossless at high quality
  REQUIRE(lo > 4 * hi);   // visible loss at Table-level low quality
}

TEST_CASE("trajectory line parses as camera-to-world", "[io]") {
  TempDir tmp("traj");
  {
    std::ofstream f(tmp.sub("t.txt"));
    f << "# comment\n";
    f << "0.0 1 2 3 0 0 0 1\n";
  }
  const Trajectory traj = io::read_trajectory(tmp.sub("t.txt"));
  REQUIRE(traj.size() == 1);
  REQUIRE((camera_center(traj[0].pose) - Eigen::Vector3d(1, 2, 3)).norm() <
          1e-12);
  REQUIRE((rotation(traj[0].pose) - Eigen::Matrix3d::Identity()).norm() <
          1e-12);
}

TEST_CASE("trajectory write/read round trip", "[io]") {
  TempDir tmp("traj2");
  RngStream rng(3, 0, 0);
  Trajectory traj;
  for (int i = 0; i < 25; ++i) {
    Pose p;
    p.q = quat_normalized(Eigen::Vector4d(rng.normal(), rng.normal(),
                                          rng.normal(), rng.normal()));
    p.t = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    traj.push_back({0.1 * i, p});
  }
  io::write_trajectory(tmp.sub("t.txt"), traj);
  const Trajectory back = io::read_trajectory(tmp.sub("t.txt"));
  REQUIRE(back.size() == traj.size());
  for (size_t i = 0; i < traj.size(); ++i) {
    REQUIRE(back[i].timestamp == Catch::Approx(traj[i].timestamp).margin(1e-9));
    REQUIRE(rotation_error(back[i].pose, traj[i].pose) < 1e-12);
    REQUIRE(translation_error(back[i].pose, traj[i].pose) < 1e-12);
  }
}

TEST_CASE("trajectory errors: malformed lines and bad timestamps", "[io]") {
  TempDir tmp("traj3");
  {
    std::ofstream f(tmp.sub("bad1.txt"));
    f << "0.0 1 2 3 0 0 1\n";  // seven fields
  }
  REQUIRE_THROWS_AS(io::read_trajectory(tmp.sub("bad1.txt")), DataError);
  {
    std::ofstream f(tmp.sub("bad2.txt"));
    f << "0.0 0 0 0 0 0 0 1\n";
    f << "0.0 1 0 0 0 0 0 1\n";  // non-increasing timestamp
  }
  REQUIRE_THROWS_AS(io::read_trajectory(tmp.sub("bad2.txt")), DataError);
  {
    std::ofstream f(tmp.sub("bad3.txt"));
    f << "0.0 0 0 0 0 0 0 1 extra\n";
  }
  REQUIRE_THROWS_AS(io::read_trajectory(tmp.sub("bad3.txt")), DataError);
  REQUIRE_THROWS_AS(io::read_trajectory(tmp.sub("missing.txt")), DataError);
}

TEST_CASE("intrinsics json round trip and validation", "[io]") {
  TempDir tmp("intr");
  const Intrinsics k{520.9, 521.0, 159.5, 119.5, 320, 240};
  io::write_intrinsics(tmp.sub("k.json"), k);
  REQUIRE(io::read_intrinsics(tmp.sub("k.json")) == k);
  {
    std::ofstream f(tmp.sub("bad.json"));
    f << "{\"fx\": 10}";
  }
  REQUIRE_THROWS_AS(io::read_intrinsics(tmp.sub("bad.json")), DataError);
  {
    std::ofstream f(tmp.sub("neg.json"));
    f << R"({"fx":-1,"fy":1,"cx":0,"cy":0,"width":4,"height":4})";
  }
  REQUIRE_THROWS_AS(io::read_intrinsics(tmp.sub("neg.json")), DataError);
}

TEST_CASE("sequence directory round trip", "[io]") {
  TempDir tmp("seq");
  RngStream rng(4, 0, 0);
  const Intrinsics intr{100, 100, 15.5, 11.5, 32, 24};
  io::Sequence seq;
  for (int i = 0; i < 3; ++i) {
    Frame f = make_frame(32, 24, 0.05 * i, intr);
    f.rgb = testutil::random_rgb8_image(32, 24, rng);
    f.depth = testutil::random_depth_image(32, 24, rng);
    f.rebuild_valid_mask();
    seq.frames.push_back(f);
    Pose p;
    p.t = Eigen::Vector3d(0.1 * i, 0, 0);
    seq.traj.push_back({0.05 * i, p});
  }
  io::write_sequence(tmp.sub("s"), seq);
  const io::Sequence back = io::read_sequence(tmp.sub("s"));
  REQUIRE(back.frames.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const Frame &a = seq.frames[i], &b = back.frames[i];
    REQUIRE(b.intrinsics == intr);
    for (size_t j = 0; j < a.rgb.size(); ++j) {
      REQUIRE(b.rgb.pixels()[j] == a.rgb.pixels()[j]);
    }
    for (size_t j = 0; j < a.depth.size(); ++j) {
      if (a.depth.pixels()[j] == kVoidDepth) {
        REQUIRE(b.depth.pixels()[j] == kVoidDepth);
      } else {
        REQUIRE(std::abs(b.depth.pixels()[j] - a.depth.pixels()[j]) <= 1e-4);
      }
    }
    REQUIRE(b.valid == a.valid);
  }
  REQUIRE_THROWS_AS(io::read_sequence(tmp.sub("nonexistent")), DataError);
}

TEST_CASE("directory hashing detects any byte change", "[io]") {
  TempDir tmp("hash");
  std::filesystem::create_directories(tmp.sub("d"));
  {
    std::ofstream f(tmp.sub("d") + "/a.txt");
    f << "hello";
  }
  const uint64_t h1 = io::fnv1a_dir(tmp.sub("d"));
  REQUIRE(h1 == io::fnv1a_dir(tmp.sub("d")));
  {
    std::ofstream f(tmp.sub("d") + "/a.txt");
    f << "hellp";
  }
  REQUIRE(io::fnv1a_dir(tmp.sub("d")) != h1);
}
