#ifndef KPX_SCENARIO_GENERATOR_HPP_
#define KPX_SCENARIO_GENERATOR_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kpx/scenario/scene.hpp"
#include "kpx/skeleton/skeleton.hpp"

namespace kpx::scenario {

// The generator simulates 2 s of history and 4 s of future at 10 Hz; the
// future is then sampled every fifth frame to give the 2 Hz supervision.
inline constexpr std::size_t kGaitFrames = kHistoryFrames + kFutureFrames * 5;
inline constexpr std::size_t kCurrentFrame = kHistoryFrames - 1;
inline constexpr std::size_t kFutureStride = 5;

inline constexpr double kJointNoiseSigma = 0.01;
inline constexpr double kDropoutRate = 0.05;
inline constexpr double kMaxSpeed = 2.5;

// Road layout in the world frame: lanes run along x, the road occupies
// |y| <= kRoadHalfWidth and a crosswalk spans |x| <= kCrosswalkHalfWidth.
inline constexpr double kRoadHalfWidth = 3.5;
inline constexpr double kCrosswalkHalfWidth = 2.0;

/// Per-frame kinematic plan of one pedestrian at 10 Hz.
struct MotionProfile {
  std::vector<Point2> pelvis;
  std::vector<double> speed;
  std::vector<double> body_yaw;
  std::vector<double> head_yaw;  // relative to the body
  std::vector<double> bend;      // 0 upright .. 1 fully bent
  std::vector<double> wave;      // 0 .. 1 right arm raised and waving
  double phase0 = 0.0;
};

/// Sinusoidal limb model driven by a motion profile; adds joint noise,
/// visibility scores and dropouts (center joints are never dropped).
skeleton::KeypointsSequence render_gait(const MotionProfile& profile,
                                        const skeleton::SkeletonSpec& spec, std::mt19937_64& rng);

/// kGaitFrames frames of the posture typical for `kind`, walking straight
/// along +x from the origin at `speed_mps` (in [0, 2.5]).
skeleton::KeypointsSequence generate_gait(ScenarioKind kind, double speed_mps, std::mt19937_64& rng);

Scene generate_scene(ScenarioKind kind, std::mt19937_64& rng);

/// Proportion per ScenarioKind, indexed like kAllScenarioKinds.
struct KindMix {
  std::array<double, 6> weights{};

  static KindMix uniform();
  /// Roughly 2.47 negatives per positive, the class balance of the large
  /// real-world crossing dataset this generator stands in for.
  static KindMix paper_balance();
  static KindMix single(ScenarioKind kind);
  double positive_fraction() const;
};

/// Parses "kind=weight,kind=weight" or a preset name ("uniform", "paper").
/// Weights must be non-negative and sum to 1 within 1e-9.
KindMix parse_mix(const std::string& text);

/// Kind counts per largest-remainder apportionment of n.
std::array<std::size_t, 6> apportion(std::size_t n, const KindMix& mix);

std::vector<Scene> generate_scenes(std::size_t n, const KindMix& mix, std::uint64_t seed);

std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace kpx::scenario

#endif  // KPX_SCENARIO_GENERATOR_HPP_
