#ifndef KPX_SCENARIO_GEOMETRY_HPP_
#define KPX_SCENARIO_GEOMETRY_HPP_

#include <span>

#include "kpx/scenario/scene.hpp"
#include "kpx/skeleton/skeleton.hpp"

namespace kpx::scenario {

inline constexpr std::size_t kHeadingWindow = 5;
inline constexpr double kMinHeadingDisplacement = 0.1;

/// Direction of travel over the last five history frames; falls back to the
/// shoulder normal of the last keypoints frame when the pedestrian moved less
/// than 0.1 m.
double estimate_heading(std::span<const Point2> history, const skeleton::SkeletonSpec& spec,
                        const skeleton::KeypointsSequence& keypoints);

/// Forward-facing normal of the shoulder line (right minus left, rotated +90 deg).
double shoulder_normal_heading(const skeleton::SkeletonSpec& spec,
                               const skeleton::KeypointsSequence& keypoints, std::size_t frame);

/// Rigid transform into a frame with `origin` at zero and `heading` along +x.
class TargetFrame {
 public:
  TargetFrame(const Point2& origin, double heading);

  Point2 to_local(const Point2& world) const;
  Point2 to_world(const Point2& local) const;
  skeleton::Vec3 to_local(const skeleton::Vec3& world) const;

  const Point2& origin() const { return origin_; }
  double heading() const { return heading_; }

 private:
  Point2 origin_;
  double heading_;
  double cos_;
  double sin_;
};

}  // namespace kpx::scenario

#endif  // KPX_SCENARIO_GEOMETRY_HPP_
