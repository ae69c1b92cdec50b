#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "corrgs/matcher.hpp"
#include "corrgs/poseopt.hpp"
#include "corrgs/relpose.hpp"
#include "corrgs/restore.hpp"
#include "corrgs/splat.hpp"
#include "corrgs/types.hpp"

namespace corrgs {

struct TrackerConfig {
  int refine_iters = 100;
  double lr_rot = 1e-4;
  double lr_trans = 2e-3;
  double lambda_c = 0.5;
  double lambda_d = 1.0;
  double tau = kDefaultTau;
  bool use_cpl = true;
  bool use_pqv = true;
  bool use_carl = true;
  bool const_velocity = true;
  int densify_stride = 1;
  // Threshold for adding new Gaussians. Kept above the loss tau so the sliver
  // of newly exposed frustum each frame is filled immediately, but below the
  // ~0.94 steady-state coverage of a fresh back-projection so settled pixels
  // are not re-densified every frame.
  double densify_tau = 0.9;
  // Fill residual transmittance with the mean color of frame 0. Keeps the
  // color gain of a just-covering map at 1; with a black background the
  // few-percent dimming correlates with the image and displaces the loss
  // minimum laterally.
  bool background_auto = true;
  double min_confidence = 0.2;
  int min_matches = 20;
  int max_consecutive_fallbacks = 5;
  RenderConfig render;
  std::string matcher = "patch";  // "oracle" or "patch"
  double oracle_sigma_px = 0.0;
  double oracle_outlier_frac = 0.0;
  int oracle_max_matches = 200;
  uint64_t seed = 0;
};

inline TrackerConfig tracker_config_from_json(const nlohmann::json& j) {
  TrackerConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "refine_iters") c.refine_iters = value.get<int>();
      else if (key == "lr_rot") c.lr_rot = value.get<double>();
      else if (key == "lr_trans") c.lr_trans = value.get<double>();
      else if (key == "lambda_c") c.lambda_c = value.get<double>();
      else if (key == "lambda_d") c.lambda_d = value.get<double>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "use_cpl") c.use_cpl = value.get<bool>();
      else if (key == "use_pqv") c.use_pqv = value.get<bool>();
      else if (key == "use_carl") c.use_carl = value.get<bool>();
      else if (key == "const_velocity") c.const_velocity = value.get<bool>();
      else if (key == "densify_stride") c.densify_stride = value.get<int>();
      else if (key == "densify_tau") c.densify_tau = value.get<double>();
      else if (key == "background_auto")
        c.background_auto = value.get<bool>();
      else if (key == "background") {
        const auto v = value.get<std::vector<double>>();
        if (v.size() != 3) throw DataError("tracker config: background needs 3 values");
        c.render.background = Eigen::Vector3d(v[0], v[1], v[2]);
      }
      else if (key == "min_confidence") c.min_confidence = value.get<double>();
      else if (key == "min_matches") c.min_matches = value.get<int>();
      else if (key == "max_consecutive_fallbacks")
        c.max_consecutive_fallbacks = value.get<int>();
      else if (key == "support_sigmas")
        c.render.support_sigmas = value.get<double>();
      else if (key == "min_transmittance")
        c.render.min_transmittance = value.get<double>();
      else if (key == "near_plane") c.render.near_plane = value.get<double>();
      else if (key == "matcher") c.matcher = value.get<std::string>();
      else if (key == "oracle_sigma_px")
        c.oracle_sigma_px = value.get<double>();
      else if (key == "oracle_outlier_frac")
        c.oracle_outlier_frac = value.get<double>();
      else if (key == "oracle_max_matches")
        c.oracle_max_matches = value.get<int>();
      else if (key == "seed") c.seed = value.get<uint64_t>();
      else throw DataError("tracker config: unknown key " + key);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("tracker config: bad value for " + key + ": " +
                      e.what());
    }
  }
  if (c.refine_iters < 0 || c.densify_stride < 1 || c.min_matches < 1 ||
      c.max_consecutive_fallbacks < 0 || c.densify_tau <= 0.0 ||
      c.densify_tau > 1.0) {
    throw DataError("tracker config: out-of-range value");
  }
  if (c.matcher != "oracle" && c.matcher != "patch") {
    throw DataError("tracker config: matcher must be oracle or patch");
  }
  return c;
}

inline nlohmann::json tracker_config_to_json(const TrackerConfig& c) {
  nlohmann::json j;
  j["refine_iters"] = c.refine_iters;
  j["lr_rot"] = c.lr_rot;
  j["lr_trans"] = c.lr_trans;
  j["lambda_c"] = c.lambda_c;
  j["lambda_d"] = c.lambda_d;
  j["tau"] = c.tau;
  j["use_cpl"] = c.use_cpl;
  j["use_pqv"] = c.use_pqv;
  j["use_carl"] = c.use_carl;
  j["const_velocity"] = c.const_velocity;
  j["densify_stride"] = c.densify_stride;
  j["densify_tau"] = c.densify_tau;
  j["background_auto"] = c.background_auto;
  j["background"] = {c.render.background.x(), c.render.background.y(),
                     c.render.background.z()};
  j["min_confidence"] = c.min_confidence;
  j["min_matches"] = c.min_matches;
  j["max_consecutive_fallbacks"] = c.max_consecutive_fallbacks;
  j["support_sigmas"] = c.render.support_sigmas;
  j["min_transmittance"] = c.render.min_transmittance;
  j["near_plane"] = c.render.near_plane;
  j["matcher"] = c.matcher;
  j["oracle_sigma_px"] = c.oracle_sigma_px;
  j["oracle_outlier_frac"] = c.oracle_outlier_frac;
  j["oracle_max_matches"] = c.oracle_max_matches;
  j["seed"] = c.seed;
  return j;
}

inline TrackerConfig read_tracker_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return tracker_config_from_json(j);
}

inline LossParams loss_params(const TrackerConfig& c) {
  LossParams lp;
  lp.lambda_c = c.lambda_c;
  lp.lambda_d = c.lambda_d;
  lp.tau = c.tau;
  return lp;
}

inline RefineConfig refine_config(const TrackerConfig& c) {
  RefineConfig rc;
  rc.iters = c.refine_iters;
  rc.lr_rot = c.lr_rot;
  rc.lr_trans = c.lr_trans;
  rc.loss = loss_params(c);
  rc.render = c.render;
  return rc;
}

struct FrameReport {
  bool fallback = false;
  bool cpl_round1 = false;  // CPL candidate won PQV in round 1
  bool cpl_round2 = false;
  bool carl_applied = false;
  bool carl_degraded = false;
  int matches_round1 = 0;
  int matches_round2 = 0;
  double loss_naive = 0.0;
  double loss_cpl = 0.0;
  double final_loss = 0.0;
  int new_gaussians = 0;
};

struct SlamState {
  TrackerConfig cfg;
  GaussianMap map;
  std::vector<Pose> poses;  // world-to-camera, one per processed frame
  std::vector<double> timestamps;
  int consecutive_fallbacks = 0;
  std::vector<FrameReport> reports;
};

// Frame 0 anchors the world frame: identity pose, map from its back-projection.
inline SlamState initialize_state(const TrackerConfig& cfg,
                                  const Frame& frame0) {
  SlamState s;
  s.cfg = cfg;
  if (cfg.background_auto) {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    int n = 0;
    for (int y = 0; y < frame0.intrinsics.height; ++y) {
      for (int x = 0; x < frame0.intrinsics.width; ++x) {
        if (!frame0.valid_at(x, y)) continue;
        for (int c = 0; c < 3; ++c) mean[c] += frame0.rgb.at(x, y, c);
        ++n;
      }
    }
    if (n > 0) s.cfg.render.background = mean / n;
  }
  const Image uncovered(frame0.intrinsics.width, frame0.intrinsics.height, 1,
                        0.0);
  s.map =
      densify({}, frame0, Pose{}, uncovered, cfg.densify_tau, cfg.densify_stride);
  if (s.map.empty()) {
    throw DataError("initialize_state: frame 0 has no valid depth");
  }
  s.poses.push_back(Pose{});
  s.timestamps.push_back(frame0.timestamp);
  FrameReport rep;
  rep.new_gaussians = static_cast<int>(s.map.size());
  s.reports.push_back(rep);
  return s;
}

// Constant-velocity propagation: P_t = P_{t-1} * (P_{t-2}^-1 * P_{t-1}).
inline Pose naive_pose(const SlamState& s) {
  if (!s.cfg.const_velocity || s.poses.size() < 2) return s.poses.back();
  const Pose& p1 = s.poses[s.poses.size() - 1];
  const Pose& p2 = s.poses[s.poses.size() - 2];
  return pose_normalized(pose_compose(p1, pose_compose(pose_inverse(p2), p1)));
}

struct CplResult {
  bool ok = false;  // false = reactive fallback
  Pose candidate;
  RenderOutput rendered;              // at the naive pose
  std::vector<Match2D> matches;       // confidence-filtered
  int lifted = 0;
  RelativePose rel;
};

// Correspondence-guided pose initialization: render at the naive pose, match
// against the observation, lift through both depth maps, solve the robust
// relative pose, and apply it on top of the naive pose.
inline CplResult cpl_initialize(const GaussianMap& map, const Pose& naive,
                                const Frame& obs, Matcher& matcher,
                                const TrackerConfig& cfg) {
  CplResult res;
  res.candidate = naive;
  res.rendered = render(map, naive, obs.intrinsics, cfg.render);
  MatchContext ctx;
  ctx.map = &map;
  ctx.render_pose = naive;
  ctx.rendered = &res.rendered;
  ctx.observed = &obs;
  for (const Match2D& m : matcher.match(ctx)) {
    if (m.confidence >= cfg.min_confidence) res.matches.push_back(m);
  }
  if (res.matches.size() < static_cast<size_t>(cfg.min_matches)) return res;
  const std::vector<Correspondence3D> corrs = lift_matches(
      res.matches, res.rendered.depth, obs.depth, obs.intrinsics);
  res.lifted = static_cast<int>(corrs.size());
  if (corrs.size() < 4) return res;
  try {
    res.rel = solve_relative_pose(corrs);
  } catch (const DataError&) {
    return res;
  }
  Pose rel;
  rel.q = res.rel.q;
  rel.t = res.rel.t;
  res.candidate = pose_normalized(pose_compose(rel, naive));
  res.ok = true;
  return res;
}

struct PqvResult {
  Pose pose;
  double loss_cpl = 0.0;
  double loss_naive = 0.0;
  bool chose_cpl = false;
};

// Renders both candidates and keeps the lower rendering loss; ties go to the
// naively propagated pose.
inline PqvResult pose_quality_verify(const GaussianMap& map,
                                     const Pose& cpl_pose,
                                     const Pose& naive_pose, const Frame& obs,
                                     const TrackerConfig& cfg) {
  const RenderOutput rc = render(map, cpl_pose, obs.intrinsics, cfg.render);
  const RenderOutput rn = render(map, naive_pose, obs.intrinsics, cfg.render);
  PqvResult res;
  res.loss_cpl =
      render_loss(rc, obs, cfg.lambda_c, cfg.lambda_d, cfg.tau);
  res.loss_naive =
      render_loss(rn, obs, cfg.lambda_c, cfg.lambda_d, cfg.tau);
  res.chose_cpl = res.loss_cpl < res.loss_naive;
  res.pose = res.chose_cpl ? cpl_pose : naive_pose;
  return res;
}

struct TrackResult {
  Pose pose;
  Frame restored;
};

// One frame of the SLAM loop: naive init, CPL + PQV, CARL fit and apply,
// one repeat round on the restored image, gradient refinement, then map
// densification. Frames whose matching fails refine from the naive pose on
// the raw observation and are excluded from the map.
inline TrackResult track_frame(SlamState& state, const Frame& obs,
                               Matcher& matcher) {
  if (state.poses.empty()) {
    throw std::logic_error("track_frame: initialize_state first");
  }
  const TrackerConfig& cfg = state.cfg;
  FrameReport rep;
  const Pose naive = naive_pose(state);
  const RefineConfig rcfg = refine_config(cfg);

  Frame restored = obs;
  Pose stage = naive;
  bool matched = false;

  if (cfg.use_cpl) {
    CplResult round1 = cpl_initialize(state.map, naive, obs, matcher, cfg);
    rep.matches_round1 = static_cast<int>(round1.matches.size());
    if (!round1.ok) {
      rep.fallback = true;
      ++state.consecutive_fallbacks;
      if (state.consecutive_fallbacks > cfg.max_consecutive_fallbacks) {
        throw TrackingError("reactive fallback exhausted after " +
                            std::to_string(state.consecutive_fallbacks - 1) +
                            " consecutive misses");
      }
      const RefineResult rr = refine_pose(state.map, naive, obs, rcfg);
      rep.final_loss = rr.best_loss;
      state.poses.push_back(rr.pose);
      state.timestamps.push_back(obs.timestamp);
      state.reports.push_back(rep);
      return {rr.pose, obs};
    }
    state.consecutive_fallbacks = 0;
    matched = true;

    if (cfg.use_pqv) {
      const PqvResult v =
          pose_quality_verify(state.map, round1.candidate, naive, obs, cfg);
      rep.loss_cpl = v.loss_cpl;
      rep.loss_naive = v.loss_naive;
      rep.cpl_round1 = v.chose_cpl;
      stage = v.pose;
    } else {
      rep.cpl_round1 = true;
      stage = round1.candidate;
    }

    if (cfg.use_carl) {
      std::vector<ColorPair> pairs;
      for (const Match2D& m : round1.matches) {
        const int xr = static_cast<int>(std::lround(m.ur));
        const int yr = static_cast<int>(std::lround(m.vr));
        const int xo = static_cast<int>(std::lround(m.uo));
        const int yo = static_cast<int>(std::lround(m.vo));
        if (xr < 0 || yr < 0 || xr >= obs.intrinsics.width ||
            yr >= obs.intrinsics.height)
          continue;
        if (xo < 0 || yo < 0 || xo >= obs.intrinsics.width ||
            yo >= obs.intrinsics.height)
          continue;
        // Background pixels carry no scene color to restore toward.
        if (round1.rendered.coverage.at(xr, yr) <= cfg.tau) continue;
        pairs.emplace_back(
            Eigen::Vector3d(obs.rgb.at(xo, yo, 0), obs.rgb.at(xo, yo, 1),
                            obs.rgb.at(xo, yo, 2)),
            Eigen::Vector3d(round1.rendered.rgb.at(xr, yr, 0),
                            round1.rendered.rgb.at(xr, yr, 1),
                            round1.rendered.rgb.at(xr, yr, 2)));
      }
      const RestorationModel model = fit_restoration(pairs);
      rep.carl_degraded = model.degraded;
      if (!model.degraded) {
        restored.rgb = apply_restoration(model, obs.rgb);
        rep.carl_applied = true;
      }
    }

    // One repeat round on the restored image; the fitted model is kept.
    CplResult round2 =
        cpl_initialize(state.map, stage, restored, matcher, cfg);
    rep.matches_round2 = static_cast<int>(round2.matches.size());
    if (round2.ok) {
      if (cfg.use_pqv) {
        const PqvResult v = pose_quality_verify(state.map, round2.candidate,
                                                stage, restored, cfg);
        rep.cpl_round2 = v.chose_cpl;
        stage = v.pose;
      } else {
        rep.cpl_round2 = true;
        stage = round2.candidate;
      }
    }
  }

  const RefineResult rr = refine_pose(state.map, stage, restored, rcfg);
  rep.final_loss = rr.best_loss;

  if (matched || !cfg.use_cpl) {
    const RenderOutput at_final =
        render(state.map, rr.pose, obs.intrinsics, cfg.render);
    const size_t before = state.map.size();
    state.map = densify(state.map, restored, rr.pose, at_final.coverage,
                        cfg.densify_tau, cfg.densify_stride);
    rep.new_gaussians = static_cast<int>(state.map.size() - before);
  }
  state.poses.push_back(rr.pose);
  state.timestamps.push_back(obs.timestamp);
  state.reports.push_back(rep);
  return {rr.pose, restored};
}

}  // namespace corrgs
