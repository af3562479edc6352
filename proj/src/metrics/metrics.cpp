#include "kpx/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace kpx::metrics {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw std::invalid_argument("classification_metrics: empty input");
  if (scores.size() != labels.size()) {
    throw std::invalid_argument(
        fmt::format("classification_metrics: {} scores vs {} labels", scores.size(), labels.size()));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("classification_metrics: label not in {0,1}");
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
      throw std::invalid_argument("classification_metrics: score outside [0,1]");
    }
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double distance(const Point2& a, const Point2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

std::size_t resolve_steps(const std::vector<Trajectory>& hypotheses, const Trajectory& gt, std::size_t steps,
                          const char* op) {
  if (hypotheses.empty()) throw std::invalid_argument(fmt::format("{}: no hypotheses", op));
  for (const auto& h : hypotheses) {
    if (h.size() != gt.size()) {
      throw std::invalid_argument(fmt::format("{}: hypothesis horizon {} vs gt {}", op, h.size(), gt.size()));
    }
  }
  if (steps == 0) steps = gt.size();
  if (steps > gt.size() || steps == 0) throw std::invalid_argument(fmt::format("{}: bad horizon {}", op, steps));
  return steps;
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) return 0.0;
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    // Consume every example tied at this threshold.
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i, ++seen) tp += static_cast<std::size_t>(labels[order[i]]);
    const double recall = ratio(tp, positives);
    ap += (recall - prev_recall) * ratio(tp, seen);
    prev_recall = recall;
  }
  return ap;
}

ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  ClassificationMetrics m;
  auto& c = m.counts;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= 0.5;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  m.acc = ratio(c.tp + c.tn, scores.size());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  const std::size_t positives = c.tp + c.fn;
  if (positives == 0 || positives == scores.size()) {
    m.auc_pr_degenerate = true;
    m.auc_pr = positives == 0 ? 0.0 : 1.0;
  } else {
    m.auc_pr = average_precision(scores, labels);
  }
  return m;
}

double min_ade(const std::vector<Trajectory>& hypotheses, const Trajectory& gt, std::size_t steps) {
  steps = resolve_steps(hypotheses, gt, steps, "min_ade");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& h : hypotheses) {
    double sum = 0.0;
    for (std::size_t t = 0; t < steps; ++t) sum += distance(h[t], gt[t]);
    best = std::min(best, sum / static_cast<double>(steps));
  }
  return best;
}

double min_fde(const std::vector<Trajectory>& hypotheses, const Trajectory& gt, std::size_t steps) {
  steps = resolve_steps(hypotheses, gt, steps, "min_fde");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& h : hypotheses) best = std::min(best, distance(h[steps - 1], gt[steps - 1]));
  return best;
}

Trajectory constant_velocity(std::span<const Point2> history, double history_hz, std::size_t future_frames,
                             double future_hz, std::size_t window) {
  if (window < 2 || history.size() < window) {
    throw std::invalid_argument(fmt::format("constant_velocity: need {} history points", std::max<std::size_t>(window, 2)));
  }
  const Point2& last = history.back();
  const Point2& first = history[history.size() - window];
  const double span_s = static_cast<double>(window - 1) / history_hz;
  const Point2 v{(last[0] - first[0]) / span_s, (last[1] - first[1]) / span_s};
  Trajectory out;
  for (std::size_t i = 1; i <= future_frames; ++i) {
    const double t = static_cast<double>(i) / future_hz;
    out.push_back({last[0] + v[0] * t, last[1] + v[1] * t});
  }
  return out;
}

EvalReport build_report(const std::vector<ExampleOutcome>& outcomes, std::size_t k, double future_hz) {
  if (outcomes.empty()) throw std::invalid_argument("build_report: no examples");
  EvalReport r;
  r.n_examples = outcomes.size();
  r.k = k;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& o : outcomes) {
    scores.push_back(o.crossing_probability);
    labels.push_back(o.label);
  }
  r.classification = classification_metrics(scores, labels);

  const std::size_t frames = outcomes.front().gt.size();
  const auto per_second = static_cast<std::size_t>(std::llround(future_hz));
  std::vector<std::size_t> steps;
  for (std::size_t s = per_second; per_second > 0 && s < frames; s += per_second) steps.push_back(s);
  steps.push_back(frames);
  for (std::size_t s : steps) {
    HorizonError h;
    h.seconds = static_cast<double>(s) / future_hz;
    for (const auto& o : outcomes) {
      h.min_ade += min_ade(o.hypotheses, o.gt, s);
      h.min_fde += min_fde(o.hypotheses, o.gt, s);
    }
    h.min_ade /= static_cast<double>(outcomes.size());
    h.min_fde /= static_cast<double>(outcomes.size());
    r.horizons.push_back(h);
  }
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  const auto& c = r.classification;
  nlohmann::json horizons = nlohmann::json::array();
  for (const auto& h : r.horizons) horizons.push_back({{"seconds", h.seconds}, {"min_ade", h.min_ade}, {"min_fde", h.min_fde}});
  return {{"n_examples", r.n_examples},
          {"k", r.k},
          {"acc", c.acc},
          {"auc_pr", c.auc_pr},
          {"auc_pr_degenerate", c.auc_pr_degenerate},
          {"f1", c.f1},
          {"precision", c.precision},
          {"recall", c.recall},
          {"counts", {{"tp", c.counts.tp}, {"fp", c.counts.fp}, {"tn", c.counts.tn}, {"fn", c.counts.fn}}},
          {"min_ade_k", r.min_ade_k()},
          {"min_fde_k", r.min_fde_k()},
          {"horizons", horizons}};
}

std::string csv_header(const EvalReport& r) {
  std::string out = "n_examples,k,acc,auc_pr,f1,precision,recall,tp,fp,tn,fn";
  for (const auto& h : r.horizons) out += fmt::format(",min_ade_{0:g}s,min_fde_{0:g}s", h.seconds);
  return out;
}

std::string csv_row(const EvalReport& r) {
  const auto& c = r.classification;
  std::string out = fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{},{},{},{}", r.n_examples, r.k, c.acc,
                                c.auc_pr, c.f1, c.precision, c.recall, c.counts.tp, c.counts.fp, c.counts.tn,
                                c.counts.fn);
  for (const auto& h : r.horizons) out += fmt::format(",{:.6f},{:.6f}", h.min_ade, h.min_fde);
  return out;
}

}  // namespace kpx::metrics
