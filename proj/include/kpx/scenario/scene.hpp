#ifndef KPX_SCENARIO_SCENE_HPP_
#define KPX_SCENARIO_SCENE_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kpx/skeleton/skeleton.hpp"

namespace kpx::scenario {

using Point2 = std::array<double, 2>;

inline constexpr std::size_t kHistoryFrames = 20;  // 2.0 s at 10 Hz
inline constexpr std::size_t kFutureFrames = 8;    // 4.0 s at 2 Hz
inline constexpr double kHistoryHz = 10.0;
inline constexpr double kFutureHz = 2.0;

enum class PolylineKind { kLaneBoundary, kCrosswalkEdge, kAgentTrack };

std::string_view to_string(PolylineKind kind);
std::optional<PolylineKind> polyline_kind_from_string(std::string_view name);

// One-hot kind (3) followed by the timestamp offset in seconds (agent tracks
// only; zero for map elements).
inline constexpr std::size_t kAttributeSize = 4;

struct PolylineVector {
  Point2 start{};
  Point2 end{};
  std::array<double, kAttributeSize> attribute{};

  bool operator==(const PolylineVector&) const = default;
};

struct Polyline {
  PolylineKind kind = PolylineKind::kLaneBoundary;
  std::vector<PolylineVector> vectors;

  /// Throws std::invalid_argument if empty or if consecutive vectors do not chain.
  void validate() const;
  bool operator==(const Polyline&) const = default;
};

/// Chains consecutive points into vectors. `time_offsets`, when given, has one
/// entry per point and the vector takes the offset of its end point.
Polyline make_polyline(PolylineKind kind, const std::vector<Point2>& points,
                       const std::vector<double>& time_offsets = {});

enum class ScenarioKind {
  kCrossWalkway,
  kCrossJaywalk,
  kParallelSidewalk,
  kStandAtCurb,
  kBendDownOnRoad,
  kWaveThenCross,
};

inline constexpr std::array<ScenarioKind, 6> kAllScenarioKinds{
    ScenarioKind::kCrossWalkway,   ScenarioKind::kCrossJaywalk,   ScenarioKind::kParallelSidewalk,
    ScenarioKind::kStandAtCurb,    ScenarioKind::kBendDownOnRoad, ScenarioKind::kWaveThenCross};

std::string_view to_string(ScenarioKind kind);
std::optional<ScenarioKind> scenario_kind_from_string(std::string_view name);
bool is_crossing(ScenarioKind kind);

/// One example, stored in the road-aligned world frame.
struct Scene {
  ScenarioKind kind = ScenarioKind::kStandAtCurb;
  std::vector<Point2> target_history;  // kHistoryFrames
  std::vector<Point2> target_future;   // kFutureFrames
  skeleton::KeypointsSequence keypoints_history;
  skeleton::KeypointsSequence keypoints_future;
  int crossing_label = 0;
  double heading = 0.0;
  std::vector<Polyline> context_agents;
  std::vector<Polyline> roadgraph;

  bool operator==(const Scene&) const = default;
};

/// Checks every Scene invariant; throws std::invalid_argument naming the first
/// violated one.
void validate_scene(const Scene& scene, const skeleton::SkeletonSpec& spec);

}  // namespace kpx::scenario

#endif  // KPX_SCENARIO_SCENE_HPP_
