#include "kpx/cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "kpx/encoders/encoders.hpp"

namespace kpx::cli {

namespace {

constexpr double kPixelsPerMeter = 24.0;
constexpr double kMargin = 3.0;  // meters around the drawn content
constexpr double kInset = 140.0;  // skeleton panel size in pixels

struct Viewport {
  double min_x = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  void include(const scenario::Point2& p) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  double width() const { return (max_x - min_x + 2 * kMargin) * kPixelsPerMeter; }
  double height() const { return (max_y - min_y + 2 * kMargin) * kPixelsPerMeter; }
  // SVG y grows downward.
  std::string xy(const scenario::Point2& p) const {
    return fmt::format("{:.2f},{:.2f}", (p[0] - min_x + kMargin) * kPixelsPerMeter,
                       (max_y - p[1] + kMargin) * kPixelsPerMeter);
  }
};

std::string path_data(const Viewport& view, const std::vector<scenario::Point2>& points) {
  std::string d;
  for (std::size_t i = 0; i < points.size(); ++i) d += (i == 0 ? "M" : " L") + view.xy(points[i]);
  return d;
}

std::vector<scenario::Point2> polyline_points(const scenario::Polyline& line) {
  std::vector<scenario::Point2> pts{line.vectors.front().start};
  for (const auto& v : line.vectors) pts.push_back(v.end);
  return pts;
}

const char* polyline_class(scenario::PolylineKind kind) {
  switch (kind) {
    case scenario::PolylineKind::kLaneBoundary: return "lane";
    case scenario::PolylineKind::kCrosswalkEdge: return "crosswalk";
    case scenario::PolylineKind::kAgentTrack: return "agent";
  }
  return "lane";
}

}  // namespace

std::string render_scene_svg(const scenario::Scene& scene, const skeleton::SkeletonSpec& spec,
                             const training::Prediction& prediction) {
  const auto frame = encoders::target_frame(scene);
  std::vector<std::vector<scenario::Point2>> hypotheses;
  for (const auto& t : prediction.hypotheses.trajectories) {
    std::vector<scenario::Point2> world{frame.origin()};
    for (const auto& p : t) world.push_back(frame.to_world(p));
    hypotheses.push_back(std::move(world));
  }
  std::vector<scenario::Point2> future{scene.target_history.back()};
  future.insert(future.end(), scene.target_future.begin(), scene.target_future.end());

  // Frame the target's motion; map elements are clipped to it.
  Viewport view;
  for (const auto& p : scene.target_history) view.include(p);
  for (const auto& p : future) view.include(p);
  for (const auto& h : hypotheses) {
    for (const auto& p : h) view.include(p);
  }
  const auto& o = frame.origin();
  view.include({o[0] - 8.0, o[1] - 8.0});
  view.include({o[0] + 8.0, o[1] + 8.0});

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.0f}\" height=\"{1:.0f}\" viewBox=\"0 0 {0:.2f} {1:.2f}\">\n",
      view.width(), view.height());
  svg += "<style>path{fill:none}.lane{stroke:#888;stroke-width:1.5}.crosswalk{stroke:#c90;stroke-width:1.5}"
         ".agent{stroke:#39c;stroke-width:1.5}.history{stroke:#000;stroke-width:2.5}"
         ".future{stroke:#080;stroke-width:2.5;stroke-dasharray:6 4}.hypothesis{stroke:#d22;stroke-opacity:0.8}"
         ".bone{stroke:#333;stroke-width:2}</style>\n";
  svg += fmt::format("<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n");
  svg += fmt::format("<title>{} (label {}), p(cross)={:.3f}</title>\n", scenario::to_string(scene.kind),
                     scene.crossing_label, prediction.crossing_probability);

  for (const auto* lines : {&scene.roadgraph, &scene.context_agents}) {
    for (const auto& line : *lines) {
      svg += fmt::format("<path class=\"{}\" d=\"{}\"/>\n", polyline_class(line.kind),
                         path_data(view, polyline_points(line)));
    }
  }
  svg += fmt::format("<path class=\"history\" d=\"{}\"/>\n", path_data(view, scene.target_history));
  svg += fmt::format("<path class=\"future\" d=\"{}\"/>\n", path_data(view, future));
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const double score = prediction.hypotheses.scores[i];
    svg += fmt::format("<path class=\"hypothesis\" data-score=\"{:.6f}\" stroke-width=\"{:.2f}\" d=\"{}\"/>\n", score,
                       0.5 + 6.0 * score, path_data(view, hypotheses[i]));
  }

  // Side view of the last history frame: forward offset vs height.
  const auto& kp = scene.keypoints_history;
  const std::size_t last = kp.frames() - 1;
  const auto center = skeleton::skeleton_center(spec, kp, last);
  const double c = std::cos(scene.heading), s = std::sin(scene.heading);
  auto joint = [&](int j) {
    const auto v = kp.position(last, static_cast<std::size_t>(j));
    const double forward = c * (v[0] - center[0]) + s * (v[1] - center[1]);
    return fmt::format("{:.2f},{:.2f}", 10.0 + kInset / 2 + forward * 60.0, 10.0 + kInset - 10.0 - v[2] * 60.0);
  };
  svg += fmt::format("<g class=\"skeleton\"><rect x=\"10\" y=\"10\" width=\"{0}\" height=\"{0}\" fill=\"#f4f4f4\" stroke=\"#ccc\"/>\n",
                     kInset);
  for (const auto& [a, b] : spec.edges()) {
    svg += fmt::format("<path class=\"bone\" d=\"M{} L{}\"/>\n", joint(a), joint(b));
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace kpx::cli
