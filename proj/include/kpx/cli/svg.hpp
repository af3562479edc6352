#ifndef KPX_CLI_SVG_HPP_
#define KPX_CLI_SVG_HPP_

#include <string>

#include "kpx/scenario/scene.hpp"
#include "kpx/training/model.hpp"

namespace kpx::cli {

/// Top-down view of a scene in world coordinates: roadgraph and agent
/// polylines, target history (solid), ground-truth future (dashed), one
/// `<path class="hypothesis">` per hypothesis with width proportional to its
/// score, and a side-view inset of the last history skeleton.
std::string render_scene_svg(const scenario::Scene& scene, const skeleton::SkeletonSpec& spec,
                             const training::Prediction& prediction);

}  // namespace kpx::cli

#endif  // KPX_CLI_SVG_HPP_
