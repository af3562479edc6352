#ifndef KPX_METRICS_METRICS_HPP_
#define KPX_METRICS_METRICS_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace kpx::metrics {

using Point2 = std::array<double, 2>;
using Trajectory = std::vector<Point2>;

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

struct ClassificationMetrics {
  double acc = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double auc_pr = 0.0;
  ConfusionCounts counts;  // at threshold 0.5
  // All labels belong to one class; auc_pr is then 1 (all positive) or 0.
  bool auc_pr_degenerate = false;
};

/// Threshold-0.5 confusion metrics plus average precision. Precision, recall
/// and F1 are 0 when their denominators are. Throws std::invalid_argument on
/// empty or mismatched input, labels outside {0,1} or scores outside [0,1].
ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const int> labels);

/// Sum over descending unique score thresholds of recall step times precision.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// Minimum over hypotheses of the mean per-step distance to `gt`, using the
/// first `steps` steps (all when 0). Throws std::invalid_argument when there
/// are no hypotheses or a horizon differs from gt.
double min_ade(const std::vector<Trajectory>& hypotheses, const Trajectory& gt, std::size_t steps = 0);
/// Same, on the distance at step `steps` - 1 (the final step when 0).
double min_fde(const std::vector<Trajectory>& hypotheses, const Trajectory& gt, std::size_t steps = 0);

/// Extrapolates the mean velocity of the last `window` history points.
Trajectory constant_velocity(std::span<const Point2> history, double history_hz, std::size_t future_frames,
                             double future_hz, std::size_t window = 5);

struct HorizonError {
  double seconds = 0.0;
  double min_ade = 0.0;
  double min_fde = 0.0;
};

struct EvalReport {
  std::size_t n_examples = 0;
  std::size_t k = 0;
  ClassificationMetrics classification;
  std::vector<HorizonError> horizons;  // ascending; the last is the full horizon

  double min_ade_k() const { return horizons.back().min_ade; }
  double min_fde_k() const { return horizons.back().min_fde; }
};

/// Per-example inputs to build_report.
struct ExampleOutcome {
  double crossing_probability = 0.0;
  int label = 0;
  std::vector<Trajectory> hypotheses;
  Trajectory gt;
};

/// Averages min_ade/min_fde over examples at every whole-second horizon.
EvalReport build_report(const std::vector<ExampleOutcome>& outcomes, std::size_t k, double future_hz);

nlohmann::json to_json(const EvalReport& report);
std::string csv_header(const EvalReport& report);
std::string csv_row(const EvalReport& report);

}  // namespace kpx::metrics

#endif  // KPX_METRICS_METRICS_HPP_
