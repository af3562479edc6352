#include "kpx/scenario/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace kpx::scenario {

double shoulder_normal_heading(const skeleton::SkeletonSpec& spec,
                               const skeleton::KeypointsSequence& keypoints, std::size_t frame) {
  const auto left = keypoints.position(frame, spec.joint_index("left_shoulder"));
  const auto right = keypoints.position(frame, spec.joint_index("right_shoulder"));
  const double dx = right[0] - left[0];
  const double dy = right[1] - left[1];
  // Rotating (dx, dy) by +90 degrees gives (-dy, dx).
  return std::atan2(dx, -dy);
}

double estimate_heading(std::span<const Point2> history, const skeleton::SkeletonSpec& spec,
                        const skeleton::KeypointsSequence& keypoints) {
  if (history.size() < kHeadingWindow) {
    throw std::invalid_argument("estimate_heading: history shorter than the heading window");
  }
  const Point2& a = history[history.size() - kHeadingWindow];
  const Point2& b = history.back();
  const double dx = b[0] - a[0];
  const double dy = b[1] - a[1];
  if (std::hypot(dx, dy) >= kMinHeadingDisplacement) return std::atan2(dy, dx);
  return shoulder_normal_heading(spec, keypoints, keypoints.frames() - 1);
}

TargetFrame::TargetFrame(const Point2& origin, double heading)
    : origin_(origin), heading_(heading), cos_(std::cos(heading)), sin_(std::sin(heading)) {}

Point2 TargetFrame::to_local(const Point2& world) const {
  const double dx = world[0] - origin_[0];
  const double dy = world[1] - origin_[1];
  return {cos_ * dx + sin_ * dy, -sin_ * dx + cos_ * dy};
}

Point2 TargetFrame::to_world(const Point2& local) const {
  return {origin_[0] + cos_ * local[0] - sin_ * local[1],
          origin_[1] + sin_ * local[0] + cos_ * local[1]};
}

skeleton::Vec3 TargetFrame::to_local(const skeleton::Vec3& world) const {
  const Point2 xy = to_local(Point2{world[0], world[1]});
  return {xy[0], xy[1], world[2]};
}

}  // namespace kpx::scenario
