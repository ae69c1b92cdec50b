#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "corrgs/matcher.hpp"
#include "corrgs/scene.hpp"

using namespace corrgs;

namespace {

Intrinsics small_intrinsics(int w = 96, int h = 72, double f = 80.0) {
  Intrinsics K;
  K.fx = K.fy = f;
  K.cx = w / 2;
  K.cy = h / 2;
  K.width = w;
  K.height = h;
  return K;
}

struct OracleSetup {
  GaussianMap map;
  Trajectory gt;
  Frame obs;
  RenderOutput rendered;
  Intrinsics K;
};

OracleSetup oracle_setup(const Pose& render_pose, const Pose& true_pose) {
  OracleSetup s;
  s.K = small_intrinsics();
  s.map = make_room_scene(3, 1200, 4.0);
  s.gt.push_back({1.5, true_pose});
  const RenderOutput at_true = render(s.map, true_pose, s.K);
  s.obs = make_frame(s.K.width, s.K.height, 1.5, s.K);
  s.obs.rgb = at_true.rgb;
  s.obs.depth = at_true.depth;
  s.obs.rebuild_valid_mask();
  s.rendered = render(s.map, render_pose, s.K);
  return s;
}

MatchContext context_of(const OracleSetup& s, const Pose& render_pose) {
  MatchContext ctx;
  ctx.map = &s.map;
  ctx.render_pose = render_pose;
  ctx.rendered = &s.rendered;
  ctx.observed = &s.obs;
  return ctx;
}

}  // namespace

TEST_CASE("oracle matcher reproduces exact projections", "[matcher]") {
  const Pose view = look_at(Eigen::Vector3d(0.3, 0.0, -1.5),
                            Eigen::Vector3d::Zero());
  OracleSetup s = oracle_setup(view, view);
  OracleMatcher matcher(s.gt);
  const auto matches = matcher.match(context_of(s, view));
  REQUIRE(matches.size() >= 25);
  for (const Match2D& m : matches) {
    CHECK(m.ur == m.uo);
    CHECK(m.vr == m.vo);
    CHECK(m.confidence == 1.0);
    CHECK(m.ur >= 0.0);
    CHECK(m.ur <= s.K.width - 1);
    CHECK(m.vr >= 0.0);
    CHECK(m.vr <= s.K.height - 1);
  }
  const auto again = matcher.match(context_of(s, view));
  REQUIRE(again.size() == matches.size());
  for (size_t i = 0; i < matches.size(); ++i) {
    CHECK(again[i].ur == matches[i].ur);
    CHECK(again[i].uo == matches[i].uo);
  }
}

TEST_CASE("oracle matcher projects through both poses", "[matcher]") {
  const Pose render_pose = look_at(Eigen::Vector3d(0.0, 0.0, -1.5),
                                   Eigen::Vector3d::Zero());
  Pose true_pose = render_pose;
  true_pose.t += Eigen::Vector3d(0.05, 0.0, 0.0);
  OracleSetup s = oracle_setup(render_pose, true_pose);
  OracleMatcher matcher(s.gt);
  const auto matches = matcher.match(context_of(s, render_pose));
  REQUIRE(matches.size() >= 25);

  // Every match must be the exact projection of one map center.
  for (const Match2D& m : matches) {
    bool found = false;
    for (const Gaussian& g : s.map) {
      const ProjectedGaussian pr = project_gaussian(g, render_pose, s.K);
      if (pr.culled || std::abs(pr.mx - m.ur) > 1e-12 ||
          std::abs(pr.my - m.vr) > 1e-12) {
        continue;
      }
      const ProjectedGaussian po = project_gaussian(g, true_pose, s.K);
      REQUIRE_FALSE(po.culled);
      CHECK(po.mx == Catch::Approx(m.uo).margin(1e-12));
      CHECK(po.my == Catch::Approx(m.vo).margin(1e-12));
      found = true;
      break;
    }
    CHECK(found);
  }
}

TEST_CASE("oracle matcher noise is keyed by timestamp", "[matcher]") {
  const Pose view = look_at(Eigen::Vector3d(0.0, 0.0, -1.5),
                            Eigen::Vector3d::Zero());
  OracleSetup s = oracle_setup(view, view);
  OracleMatcherConfig cfg;
  cfg.sigma_px = 1.0;
  cfg.seed = 7;

  Trajectory gt2 = s.gt;
  gt2.push_back({2.5, view});
  OracleMatcher matcher(gt2, cfg);
  const auto a = matcher.match(context_of(s, view));
  const auto b = matcher.match(context_of(s, view));
  REQUIRE(a.size() == b.size());
  REQUIRE(!a.empty());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].ur == b[i].ur);

  Frame later = s.obs;
  later.timestamp = 2.5;
  MatchContext ctx = context_of(s, view);
  ctx.observed = &later;
  const auto c = matcher.match(ctx);
  REQUIRE(!c.empty());
  bool any_differs = false;
  for (size_t i = 0; i < std::min(a.size(), c.size()); ++i) {
    if (a[i].ur != c[i].ur || a[i].vo != c[i].vo) any_differs = true;
  }
  CHECK(any_differs);

  SECTION("noisy endpoints move away from the exact projection") {
    bool moved = false;
    OracleMatcher exact(s.gt);
    const auto clean = exact.match(context_of(s, view));
    for (size_t i = 0; i < std::min(a.size(), clean.size()); ++i) {
      if (a[i].ur != clean[i].ur) moved = true;
    }
    CHECK(moved);
  }
}

TEST_CASE("oracle matcher injects outliers and honors the gt table",
          "[matcher]") {
  const Pose view = look_at(Eigen::Vector3d(0.0, 0.0, -1.5),
                            Eigen::Vector3d::Zero());
  OracleSetup s = oracle_setup(view, view);

  SECTION("unknown timestamp yields no matches") {
    OracleMatcher matcher(Trajectory{});
    CHECK(matcher.match(context_of(s, view)).empty());
  }

  SECTION("outlier fraction one scrambles every observed endpoint") {
    OracleMatcherConfig cfg;
    cfg.outlier_frac = 1.0;
    cfg.seed = 11;
    OracleMatcher matcher(s.gt, cfg);
    const auto matches = matcher.match(context_of(s, view));
    REQUIRE(matches.size() >= 20);
    int displaced = 0;
    for (const Match2D& m : matches) {
      if (std::abs(m.uo - m.ur) > 1e-9 || std::abs(m.vo - m.vr) > 1e-9) {
        ++displaced;
      }
    }
    CHECK(displaced == static_cast<int>(matches.size()));
  }
}

// Sharp two-octave noise texture; splat renders are too smooth for stable
// corner detection at this resolution.
RenderOutput textured_render(int w, int h, uint64_t seed) {
  RenderOutput out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d p(x, y, 0.5);
      for (int c = 0; c < 3; ++c) {
        const double coarse = detail::value_noise_3d(p, 5.0, seed * 4 + c);
        const double fine = detail::value_noise_3d(p, 2.0, seed * 4 + c + 31);
        out.rgb.at(x, y, c) = 0.15 + 0.7 * (0.6 * coarse + 0.4 * fine);
      }
      out.depth.at(x, y) = 2.0;
      out.coverage.at(x, y) = 1.0;
    }
  }
  return out;
}

TEST_CASE("patch matcher recovers an integer image shift", "[matcher]") {
  const Intrinsics K = small_intrinsics();
  const RenderOutput base = textured_render(K.width, K.height, 9);

  const int shift = 3;
  Frame obs = make_frame(K.width, K.height, 0.0, K);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        obs.rgb.at(x, y, c) =
            x >= shift ? base.rgb.at(x - shift, y, c) : 0.0;
      }
      obs.depth.at(x, y) = x >= shift ? base.depth.at(x - shift, y) : 0.0;
    }
  }
  obs.rebuild_valid_mask();

  MatchContext ctx;
  ctx.rendered = &base;
  ctx.observed = &obs;
  PatchMatcher matcher;
  const auto matches = matcher.match(ctx);
  REQUIRE(matches.size() >= 10);
  int exact = 0;
  for (const Match2D& m : matches) {
    CHECK(m.confidence >= 0.6);
    if (m.uo - m.ur == shift && m.vo == m.vr) ++exact;
  }
  CHECK(exact >= static_cast<int>(matches.size() * 8 / 10));
}

TEST_CASE("patch matcher finds zero displacement on identical images",
          "[matcher]") {
  const Intrinsics K = small_intrinsics();
  const RenderOutput base = textured_render(K.width, K.height, 14);
  Frame obs = make_frame(K.width, K.height, 0.0, K);
  obs.rgb = base.rgb;
  obs.depth = base.depth;
  obs.rebuild_valid_mask();

  MatchContext ctx;
  ctx.rendered = &base;
  ctx.observed = &obs;
  PatchMatcher matcher;
  const auto matches = matcher.match(ctx);
  REQUIRE(matches.size() >= 10);
  for (const Match2D& m : matches) {
    CHECK(m.uo == m.ur);
    CHECK(m.vo == m.vr);
  }
}
