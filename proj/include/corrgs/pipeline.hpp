#pragma once

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "corrgs/io.hpp"
#include "corrgs/perturb_depth.hpp"
#include "corrgs/perturb_motion.hpp"
#include "corrgs/perturb_rgb.hpp"
#include "corrgs/rng.hpp"
#include "corrgs/scene.hpp"
#include "corrgs/splat.hpp"
#include "corrgs/types.hpp"

namespace corrgs::pipeline {

enum class Stage { kMotion, kRgb, kDepth, kDesync };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kMotion: return "motion";
    case Stage::kRgb: return "rgb";
    case Stage::kDepth: return "depth";
    case Stage::kDesync: return "desync";
  }
  throw std::invalid_argument("unknown stage");
}

inline Stage stage_from_name(const std::string& name) {
  for (Stage s : {Stage::kMotion, Stage::kRgb, Stage::kDepth, Stage::kDesync}) {
    if (name == stage_name(s)) return s;
  }
  throw DataError("unknown pipeline stage: " + name);
}

// One perturbation to apply. kind/level are stage-dependent:
//   rgb    kind = rgb perturbation name, level = severity 1..5
//   depth  kind = depth perturbation name, level = severity 1..5
//   motion kind = "deviation" (level = preset 1..3) or "speedup" (level = k)
//   desync kind = "shift", level = frame interval delta >= 0
struct PerturbSpec {
  Stage stage = Stage::kRgb;
  std::string kind;
  int level = 1;
  perturb::PerturbMode mode = perturb::PerturbMode::kStatic;
  uint64_t seed = 0;
};

struct PipelineManifest {
  std::vector<PerturbSpec> specs;
  std::string input;   // clean sequence directory
  std::string output;  // perturbed sequence directory; empty = in memory only
  std::string scene;   // Gaussian map json; required for motion deviation
  uint64_t seed = 0;
};

inline void check_manifest(const PipelineManifest& m) {
  int n_motion = 0, n_desync = 0;
  for (const PerturbSpec& s : m.specs) {
    switch (s.stage) {
      case Stage::kMotion:
        ++n_motion;
        if (s.mode == perturb::PerturbMode::kDynamic) {
          throw DataError("motion stage has no dynamic mode");
        }
        if (s.kind == "deviation") {
          if (s.level < 1 || s.level > perturb::kNumMotionPresets) {
            throw DataError("motion deviation preset out of range");
          }
          if (m.scene.empty()) {
            throw DataError("motion deviation needs a scene to re-render");
          }
        } else if (s.kind == "speedup") {
          if (s.level < 1) throw DataError("speedup factor must be >= 1");
        } else {
          throw DataError("unknown motion kind: " + s.kind);
        }
        break;
      case Stage::kRgb:
        perturb::rgb_kind_from_name(s.kind);
        if (s.level < 1 || s.level > 5) {
          throw DataError("rgb severity out of range: " +
                          std::to_string(s.level));
        }
        break;
      case Stage::kDepth:
        perturb::depth_kind_from_name(s.kind);
        if (s.level < 1 || s.level > 5) {
          throw DataError("depth severity out of range: " +
                          std::to_string(s.level));
        }
        break;
      case Stage::kDesync:
        ++n_desync;
        if (s.kind != "shift") {
          throw DataError("unknown desync kind: " + s.kind);
        }
        if (s.level < 0) throw DataError("desync delta must be >= 0");
        break;
    }
  }
  if (n_motion > 1) throw DataError("at most one motion spec per manifest");
  if (n_desync > 1) throw DataError("at most one desync spec per manifest");
}

inline PipelineManifest parse_manifest(const nlohmann::json& j) {
  PipelineManifest m;
  try {
    m.input = j.value("input", std::string());
    m.output = j.value("output", std::string());
    m.scene = j.value("scene", std::string());
    m.seed = j.value("seed", uint64_t{0});
    for (const nlohmann::json& e : j.value("perturbations",
                                           nlohmann::json::array())) {
      PerturbSpec s;
      s.stage = stage_from_name(e.at("stage").get<std::string>());
      s.kind = e.at("kind").get<std::string>();
      s.level = e.at("level").get<int>();
      const std::string mode = e.value("mode", std::string("static"));
      if (mode == "static") {
        s.mode = perturb::PerturbMode::kStatic;
      } else if (mode == "dynamic") {
        s.mode = perturb::PerturbMode::kDynamic;
      } else {
        throw DataError("unknown mode: " + mode);
      }
      s.seed = e.contains("seed") ? e.at("seed").get<uint64_t>() : m.seed;
      m.specs.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid manifest: ") + e.what());
  }
  check_manifest(m);
  return m;
}

inline PipelineManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid manifest json " + path + ": " + e.what());
  }
  return parse_manifest(j);
}

// Per-frame severity for one spec: the nominal level in static mode, uniform
// jitter into {level-1, level, level+1} clipped to [1,5] in dynamic mode.
inline std::vector<int> dynamic_mode_schedule(int level, int n_frames,
                                              perturb::PerturbMode mode,
                                              RngStream& rng) {
  std::vector<int> out(static_cast<size_t>(n_frames), level);
  if (mode == perturb::PerturbMode::kDynamic) {
    for (int& v : out) {
      v = std::clamp(level + rng.uniform_int(3) - 1, 1, 5);
    }
  }
  return out;
}

struct DesyncedStreams {
  FrameSequence rgb;
  FrameSequence depth;
};

// Pairs rgb[t] with depth[t + delta_t]; the depth stream lags. Static mode
// uses delta_t = delta; dynamic mode draws delta_t from {delta-1, delta,
// delta+1} per frame (floored at 0). Frames whose partner falls off the end
// of the sequence are dropped.
inline DesyncedStreams desync_streams(const FrameSequence& rgb,
                                      const FrameSequence& depth, int delta,
                                      perturb::PerturbMode mode,
                                      RngStream& rng) {
  if (delta < 0) throw std::invalid_argument("desync delta must be >= 0");
  const int n = static_cast<int>(std::min(rgb.size(), depth.size()));
  if (delta >= n) {
    throw std::invalid_argument("desync delta " + std::to_string(delta) +
                                " >= sequence length " + std::to_string(n));
  }
  DesyncedStreams out;
  for (int t = 0; t < n; ++t) {
    int dt = delta;
    if (mode == perturb::PerturbMode::kDynamic) {
      dt = std::max(0, delta + rng.uniform_int(3) - 1);
    }
    if (t + dt >= n) break;
    out.rgb.push_back(rgb[t]);
    out.depth.push_back(depth[t + dt]);
  }
  return out;
}

struct PipelineResult {
  io::Sequence output;             // perturbed frames + perturbed trajectory
  io::Sequence clean;              // input, retained for reference metrics
  std::vector<std::string> trace;  // "stage:kind" in execution order
};

// Rng stream ids per role; spec index keeps same-seed specs decorrelated.
namespace detail {
inline constexpr uint64_t kScheduleStream = 1000;
inline constexpr uint64_t kApplyStream = 2000;
inline constexpr uint64_t kDesyncStream = 3000;
inline constexpr uint64_t kMotionStream = 4000;
}  // namespace detail

// Applies the manifest in the fixed stage order motion -> render -> rgb ->
// depth -> desync, whatever order the manifest lists; within a stage, specs
// run in list order. Static mode keys the rng identically for every frame,
// dynamic mode keys it by frame index.
inline PipelineResult run_pipeline(const PipelineManifest& m,
                                   const io::Sequence& input) {
  check_manifest(m);
  PipelineResult res;
  res.clean = input;
  res.output = input;

  std::vector<size_t> rgb_specs, depth_specs;
  const PerturbSpec* motion = nullptr;
  const PerturbSpec* desync = nullptr;
  size_t motion_idx = 0, desync_idx = 0;
  for (size_t i = 0; i < m.specs.size(); ++i) {
    switch (m.specs[i].stage) {
      case Stage::kMotion: motion = &m.specs[i]; motion_idx = i; break;
      case Stage::kRgb: rgb_specs.push_back(i); break;
      case Stage::kDepth: depth_specs.push_back(i); break;
      case Stage::kDesync: desync = &m.specs[i]; desync_idx = i; break;
    }
  }

  if (motion != nullptr) {
    res.trace.push_back(std::string("motion:") + motion->kind);
    if (motion->kind == "deviation") {
      RngStream rng(motion->seed, 0, detail::kMotionStream + motion_idx);
      res.output.traj = perturb::deviate_trajectory(
          res.output.traj, perturb::kMotionSigmaRotDeg[motion->level - 1],
          perturb::kMotionSigmaTransM[motion->level - 1], rng);
      const GaussianMap map = load_map(m.scene);
      if (res.output.frames.empty()) {
        throw DataError("run_pipeline: empty input sequence");
      }
      res.output.frames = render_sequence(
          map, res.output.traj, res.output.frames[0].intrinsics);
      res.trace.push_back("render");
    } else {  // speedup
      res.output.traj =
          perturb::speedup_trajectory(res.output.traj, motion->level);
      res.output.frames =
          perturb::speedup_frames(res.output.frames, motion->level);
    }
  }

  const int n = static_cast<int>(res.output.frames.size());
  for (size_t i : rgb_specs) {
    const PerturbSpec& s = m.specs[i];
    res.trace.push_back(std::string("rgb:") + s.kind);
    const perturb::RgbKind kind = perturb::rgb_kind_from_name(s.kind);
    RngStream sched_rng(s.seed, 0, detail::kScheduleStream + i);
    const std::vector<int> levels =
        dynamic_mode_schedule(s.level, n, s.mode, sched_rng);
    for (int t = 0; t < n; ++t) {
      const uint64_t frame_key =
          s.mode == perturb::PerturbMode::kStatic ? 0 : t;
      RngStream rng(s.seed, frame_key, detail::kApplyStream + i);
      res.output.frames[t].rgb = perturb::apply_rgb_perturb(
          res.output.frames[t].rgb, kind, levels[t], rng, s.mode);
    }
  }

  for (size_t i : depth_specs) {
    const PerturbSpec& s = m.specs[i];
    res.trace.push_back(std::string("depth:") + s.kind);
    const perturb::DepthKind kind = perturb::depth_kind_from_name(s.kind);
    RngStream sched_rng(s.seed, 0, detail::kScheduleStream + i);
    const std::vector<int> levels =
        dynamic_mode_schedule(s.level, n, s.mode, sched_rng);
    for (int t = 0; t < n; ++t) {
      const uint64_t frame_key =
          s.mode == perturb::PerturbMode::kStatic ? 0 : t;
      RngStream rng(s.seed, frame_key, detail::kApplyStream + i);
      res.output.frames[t].depth = perturb::apply_depth_perturb(
          res.output.frames[t].depth, kind, levels[t], rng);
      res.output.frames[t].rebuild_valid_mask();
    }
  }

  if (desync != nullptr) {
    res.trace.push_back("desync:shift");
    RngStream rng(desync->seed, 0, detail::kDesyncStream + desync_idx);
    const DesyncedStreams streams = desync_streams(
        res.output.frames, res.output.frames, desync->level, desync->mode,
        rng);
    res.output.frames = streams.rgb;
    for (size_t t = 0; t < res.output.frames.size(); ++t) {
      res.output.frames[t].depth = streams.depth[t].depth;
      res.output.frames[t].rebuild_valid_mask();
    }
    res.output.traj.resize(res.output.frames.size());
  }

  if (!m.output.empty()) {
    io::write_sequence(m.output, res.output);
  }
  return res;
}

inline PipelineResult run_pipeline(const PipelineManifest& m) {
  if (m.input.empty()) throw DataError("run_pipeline: manifest has no input");
  return run_pipeline(m, io::read_sequence(m.input));
}

}  // namespace corrgs::pipeline
