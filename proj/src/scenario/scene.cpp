#include "kpx/scenario/scene.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "kpx/scenario/geometry.hpp"

namespace kpx::scenario {

namespace {

constexpr double kCenterTolerance = 0.05;

bool finite(const Point2& p) { return std::isfinite(p[0]) && std::isfinite(p[1]); }

}  // namespace

std::string_view to_string(PolylineKind kind) {
  switch (kind) {
    case PolylineKind::kLaneBoundary: return "lane_boundary";
    case PolylineKind::kCrosswalkEdge: return "crosswalk_edge";
    case PolylineKind::kAgentTrack: return "agent_track";
  }
  return "unknown";
}

std::optional<PolylineKind> polyline_kind_from_string(std::string_view name) {
  for (auto k : {PolylineKind::kLaneBoundary, PolylineKind::kCrosswalkEdge, PolylineKind::kAgentTrack}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void Polyline::validate() const {
  if (vectors.empty()) throw std::invalid_argument("polyline has no vectors");
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (!finite(vectors[i].start) || !finite(vectors[i].end)) {
      throw std::invalid_argument("polyline has a non-finite vertex");
    }
    if (i + 1 < vectors.size() && vectors[i].end != vectors[i + 1].start) {
      throw std::invalid_argument(fmt::format("polyline vector {} does not chain to {}", i, i + 1));
    }
  }
}

Polyline make_polyline(PolylineKind kind, const std::vector<Point2>& points,
                       const std::vector<double>& time_offsets) {
  if (points.size() < 2) throw std::invalid_argument("make_polyline: need at least two points");
  if (!time_offsets.empty() && time_offsets.size() != points.size()) {
    throw std::invalid_argument("make_polyline: one time offset per point required");
  }
  Polyline line;
  line.kind = kind;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    PolylineVector v;
    v.start = points[i];
    v.end = points[i + 1];
    v.attribute[static_cast<std::size_t>(kind)] = 1.0;
    v.attribute[3] = time_offsets.empty() ? 0.0 : time_offsets[i + 1];
    line.vectors.push_back(v);
  }
  return line;
}

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kCrossWalkway: return "cross_walkway";
    case ScenarioKind::kCrossJaywalk: return "cross_jaywalk";
    case ScenarioKind::kParallelSidewalk: return "parallel_sidewalk";
    case ScenarioKind::kStandAtCurb: return "stand_at_curb";
    case ScenarioKind::kBendDownOnRoad: return "bend_down_on_road";
    case ScenarioKind::kWaveThenCross: return "wave_then_cross";
  }
  return "unknown";
}

std::optional<ScenarioKind> scenario_kind_from_string(std::string_view name) {
  for (ScenarioKind k : kAllScenarioKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

bool is_crossing(ScenarioKind kind) {
  return kind == ScenarioKind::kCrossWalkway || kind == ScenarioKind::kCrossJaywalk ||
         kind == ScenarioKind::kWaveThenCross;
}

void validate_scene(const Scene& scene, const skeleton::SkeletonSpec& spec) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("scene: " + what); };
  if (scene.target_history.size() != kHistoryFrames) fail("target_history must have 20 frames");
  if (scene.target_future.size() != kFutureFrames) fail("target_future must have 8 frames");
  for (const auto& p : scene.target_history) {
    if (!finite(p)) fail("non-finite target_history");
  }
  for (const auto& p : scene.target_future) {
    if (!finite(p)) fail("non-finite target_future");
  }
  if (scene.keypoints_history.frames() != kHistoryFrames) fail("keypoints_history must have 20 frames");
  if (scene.keypoints_future.frames() != kFutureFrames) fail("keypoints_future must have 8 frames");
  if (scene.keypoints_history.joints() != spec.joint_count() ||
      scene.keypoints_future.joints() != spec.joint_count()) {
    fail("keypoints joint count does not match skeleton");
  }
  scene.keypoints_history.validate();
  scene.keypoints_future.validate();
  if (scene.crossing_label != 0 && scene.crossing_label != 1) fail("crossing_label must be 0 or 1");
  if (scene.crossing_label != (is_crossing(scene.kind) ? 1 : 0)) {
    fail("crossing_label inconsistent with scenario kind");
  }
  if (!std::isfinite(scene.heading)) fail("non-finite heading");
  for (std::size_t t = 0; t < kHistoryFrames; ++t) {
    const auto c = skeleton::skeleton_center(spec, scene.keypoints_history, t);
    const double d = std::hypot(c[0] - scene.target_history[t][0], c[1] - scene.target_history[t][1]);
    if (d > kCenterTolerance) {
      fail(fmt::format("keypoints center deviates {:.3f} m from track at frame {}", d, t));
    }
  }
  for (const auto& line : scene.context_agents) {
    line.validate();
    if (line.kind != PolylineKind::kAgentTrack) fail("context agent polyline must be agent_track");
  }
  for (const auto& line : scene.roadgraph) {
    line.validate();
    if (line.kind == PolylineKind::kAgentTrack) fail("roadgraph polyline cannot be agent_track");
  }
}

}  // namespace kpx::scenario
