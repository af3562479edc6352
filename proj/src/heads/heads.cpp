#include "kpx/heads/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "kpx/autodiff/layers.hpp"
#include "kpx/skeleton/skeleton.hpp"

namespace kpx::heads {

namespace {

using ad::Shape;
using ad::Value;

Value row(const Value& v) { return ad::reshape(v, {1, v.size()}); }

Value flat(const Value& v) { return ad::reshape(v, {v.size()}); }

Value scalar(const Value& v) { return ad::reshape(v, Shape{}); }

// Two-layer perceptron on [embedding ‖ per-row features]; the embedding part
// of the first layer is computed once and broadcast over rows.
Value conditioned_mlp(ad::ParamBinding& p, const std::string& name, const Value& embedding, const Value& rows) {
  const Value& w1 = p(name + ".fc1.w");
  const std::size_t e = embedding.size();
  if (rows.rank() != 2 || w1.dim(0) != e + rows.dim(1)) {
    throw ad::ShapeError(name, w1.shape(), rows.shape());
  }
  const Value shared = ad::matmul(row(embedding), ad::slice(w1, 0, 0, e)) + row(p(name + ".fc1.b"));
  const Value per_row = ad::matmul(rows, ad::slice(w1, 0, e, w1.dim(0)));
  const Value hidden = ad::relu(per_row + ad::repeat(shared, 0, rows.dim(0)));
  return ad::linear(p, name + ".fc2", hidden);
}

Value constant_trajectory(const Trajectory& t) {
  std::vector<double> data;
  for (const auto& p : t) data.insert(data.end(), {p[0], p[1]});
  return Value::constant({t.size(), 2}, std::move(data));
}

}  // namespace

void register_heads(ad::ParamStore& store, const HeadConfig& config, std::uint64_t seed) {
  ad::add_linear(store, "ar.complete", kCompleteSize, 1, seed);
  ad::add_linear(store, "ar.keypoints", kKeypointsSize, 1, seed);
  ad::add_linear(store, "tgt.fc1", kCompleteSize + 2, kHidden, seed);
  ad::add_linear(store, "tgt.fc2", kHidden, 3, seed);
  ad::add_linear(store, "traj.fc1", kCompleteSize + 2, kHidden, seed);
  ad::add_linear(store, "traj.fc2", kHidden, kTrajectoryValues, seed);
  ad::add_linear(store, "score.fc1", kCompleteSize + kTrajectoryValues, kHidden, seed);
  ad::add_linear(store, "score.fc2", kHidden, 1, seed);
  ad::add_linear(store, "kjp", kKeypointsSize, skeleton::factorial(config.segments), seed);
  ad::add_linear(store, "kpp.fc1", kKeypointsSize, kHidden, seed);
  ad::add_linear(store, "kpp.fc2", kHidden, scenario::kFutureFrames * config.joints * 3, seed);
  ad::add_linear(store, "kcl.fc1", kKeypointsSize, kHidden, seed);
  ad::add_linear(store, "kcl.fc2", kHidden, kHidden, seed);
  ad::add_linear(store, "kcl.fc3", kHidden, kHidden, seed);
}

ActionOutput action_head(ad::ParamBinding& params, const Value& complete, const Value& keypoints) {
  ActionOutput out;
  out.p_complete = scalar(ad::sigmoid(ad::linear(params, "ar.complete", row(complete))));
  out.p_keypoints = scalar(ad::sigmoid(ad::linear(params, "ar.keypoints", row(keypoints))));
  return out;
}

Value bce(const Value& p, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument(fmt::format("bce: label {} is not 0 or 1", label));
  const Value q = ad::clamp(p, kBceClamp, 1.0 - kBceClamp);
  return label == 1 ? -ad::log(q) : -ad::log(ad::add_scalar(-q, 1.0));
}

Value loss_ar(const ActionOutput& out, int label) {
  return ad::scale(bce(out.p_complete, label) + bce(out.p_keypoints, label), 0.5);
}

std::vector<Point2> sample_target_candidates(double heading, std::size_t grid_n, double extent) {
  if (grid_n % 2 == 0) throw std::invalid_argument(fmt::format("grid_n must be odd, got {}", grid_n));
  const double c = std::cos(heading), s = std::sin(heading);
  const double step = grid_n > 1 ? 2.0 * extent / static_cast<double>(grid_n - 1) : 0.0;
  const long half = static_cast<long>(grid_n / 2);
  std::vector<Point2> out;
  out.reserve(grid_n * grid_n);
  for (long i = -half; i <= half; ++i) {
    for (long j = -half; j <= half; ++j) {
      const double x = static_cast<double>(i) * step;
      const double y = static_cast<double>(j) * step;
      out.push_back({c * x - s * y, s * x + c * y});
    }
  }
  return out;
}

TargetPrediction predict_targets(ad::ParamBinding& params, const Value& complete,
                                 const std::vector<Point2>& candidates) {
  std::vector<double> data;
  for (const auto& p : candidates) data.insert(data.end(), {p[0], p[1]});
  const Value out = conditioned_mlp(params, "tgt", complete, Value::constant({candidates.size(), 2}, std::move(data)));
  return {flat(ad::slice(out, 1, 0, 1)), ad::slice(out, 1, 1, 3)};
}

std::size_t nearest_candidate(const std::vector<Point2>& candidates, const Point2& point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double d = std::hypot(candidates[i][0] - point[0], candidates[i][1] - point[1]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Value loss_target(const TargetPrediction& pred, const std::vector<Point2>& candidates, const Point2& gt_endpoint) {
  const std::size_t n = nearest_candidate(candidates, gt_endpoint);
  const Value ce = -flat(ad::slice(ad::log_softmax(pred.logits, 0), 0, n, n + 1));
  const Value residual = Value::constant(
      {1, 2}, {gt_endpoint[0] - candidates[n][0], gt_endpoint[1] - candidates[n][1]});
  const Value offset = ad::slice(pred.offsets, 0, n, n + 1);
  return scalar(ce) + ad::sum_all(ad::huber(offset - residual, kHuberDelta));
}

Value generate_trajectory(ad::ParamBinding& params, const Value& complete, const Value& targets) {
  return conditioned_mlp(params, "traj", complete, targets);
}

Value loss_traj(const Value& pred, const Trajectory& gt) {
  const Value p = ad::reshape(pred, {gt.size(), 2});
  return ad::mean(ad::sum(ad::huber(p - constant_trajectory(gt), kHuberDelta), 1), 0);
}

Value score_trajectories(ad::ParamBinding& params, const Value& complete, const Value& trajectories) {
  return flat(conditioned_mlp(params, "score", complete, trajectories));
}

std::vector<double> teacher_distribution(const Value& trajectories, const Trajectory& gt, double alpha) {
  const std::size_t m = trajectories.dim(0);
  const std::size_t steps = gt.size();
  if (trajectories.dim(1) != 2 * steps) throw ad::ShapeError("teacher_distribution", trajectories.shape(), Shape{m, 2 * steps});
  const auto data = trajectories.data();
  std::vector<double> d(m, 0.0);
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t t = 0; t < steps; ++t) {
      d[s] = std::max(d[s], std::hypot(data[s * 2 * steps + 2 * t] - gt[t][0], data[s * 2 * steps + 2 * t + 1] - gt[t][1]));
    }
  }
  const double dmin = *std::min_element(d.begin(), d.end());
  std::vector<double> psi(m);
  double z = 0.0;
  for (std::size_t s = 0; s < m; ++s) z += psi[s] = std::exp(-(d[s] - dmin) / alpha);
  for (double& v : psi) v /= z;
  return psi;
}

Value loss_score(const Value& logits, const std::vector<double>& teacher) {
  if (logits.rank() != 1 || logits.dim(0) != teacher.size()) {
    throw ad::ShapeError("loss_score", logits.shape(), Shape{teacher.size()});
  }
  double neg_entropy = 0.0;
  for (double p : teacher) {
    if (p > 0.0) neg_entropy += p * std::log(p);
  }
  const Value ce = -ad::sum_all(Value::constant({teacher.size()}, teacher) * ad::log_softmax(logits, 0));
  // Rounding can leave a perfect fit a hair below zero.
  return ad::relu(ad::add_scalar(ce, neg_entropy));
}

Value teacher_log_distribution(const Value& trajectories, const Trajectory& gt, double alpha) {
  const std::size_t m = trajectories.dim(0);
  const std::size_t steps = gt.size();
  if (trajectories.rank() != 2 || trajectories.dim(1) != 2 * steps) {
    throw ad::ShapeError("teacher_log_distribution", trajectories.shape(), Shape{m, 2 * steps});
  }
  std::vector<double> flat;
  for (const auto& p : gt) flat.insert(flat.end(), {p[0], p[1]});
  const Value diff = trajectories - ad::repeat(Value::constant({1, 2 * steps}, std::move(flat)), 0, m);
  const Value sq = ad::sum(ad::reshape(ad::square(diff), {m * steps, 2}), 1);
  // The floor keeps sqrt differentiable where a trajectory hits gt exactly.
  const Value dist = ad::max(ad::reshape(ad::sqrt(ad::add_scalar(sq, 1e-18)), {m, steps}), 1);
  return ad::log_softmax(ad::scale(dist, -1.0 / alpha), 0);
}

Value loss_score(const Value& logits, const Value& trajectories, const Trajectory& gt, double alpha) {
  const Value log_psi = teacher_log_distribution(trajectories, gt, alpha);
  if (logits.rank() != 1 || logits.dim(0) != log_psi.dim(0)) {
    throw ad::ShapeError("loss_score", logits.shape(), log_psi.shape());
  }
  const Value kl = ad::sum_all(ad::exp(log_psi) * (log_psi - ad::log_softmax(logits, 0)));
  return ad::relu(kl);
}

TrajectoryHypotheses select_trajectories(const std::vector<Trajectory>& trajectories,
                                         const std::vector<double>& scores, std::size_t k, double threshold) {
  if (trajectories.size() != scores.size()) throw std::invalid_argument("select_trajectories: size mismatch");
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("select_trajectories: non-finite score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  TrajectoryHypotheses out;
  for (std::size_t i : order) {
    if (out.indices.size() >= k) break;
    const Point2& end = trajectories[i].back();
    bool separated = true;
    for (std::size_t j : out.indices) {
      const Point2& other = trajectories[j].back();
      if (std::hypot(end[0] - other[0], end[1] - other[1]) < threshold) {
        separated = false;
        break;
      }
    }
    if (!separated) continue;
    out.indices.push_back(i);
    out.trajectories.push_back(trajectories[i]);
    out.scores.push_back(scores[i]);
  }
  const double total = std::accumulate(out.scores.begin(), out.scores.end(), 0.0);
  for (double& s : out.scores) s = total > 0.0 ? s / total : 1.0 / static_cast<double>(out.scores.size());
  return out;
}

Value kjp_head(ad::ParamBinding& params, const Value& keypoints) {
  return flat(ad::linear(params, "kjp", row(keypoints)));
}

Value loss_kjp(const Value& logits, std::uint64_t label) {
  if (label >= logits.size()) throw std::invalid_argument(fmt::format("loss_kjp: label {} out of range", label));
  return scalar(-ad::slice(ad::log_softmax(logits, 0), 0, label, label + 1));
}

Value kp_head(ad::ParamBinding& params, const Value& keypoints) {
  return flat(ad::linear(params, "kpp.fc2", ad::relu(ad::linear(params, "kpp.fc1", row(keypoints)))));
}

Value loss_kp(const Value& pred, const std::vector<double>& gt) {
  if (pred.size() != gt.size()) throw ad::ShapeError("loss_kp", pred.shape(), Shape{gt.size()});
  return ad::mean_all(ad::square(pred - Value::constant(pred.shape(), gt)));
}

Value kcl_project(ad::ParamBinding& params, const Value& keypoints) {
  const Value h1 = ad::relu(ad::linear(params, "kcl.fc1", row(keypoints)));
  const Value h2 = ad::relu(ad::linear(params, "kcl.fc2", h1));
  return flat(ad::linear(params, "kcl.fc3", h2));
}

Value cosine_matrix(const std::vector<Value>& projections, KclStats* stats) {
  const std::size_t n = projections.size();
  if (n == 0) throw std::invalid_argument("cosine_matrix: no projections");
  std::vector<Value> rows;
  for (const auto& z : projections) rows.push_back(row(z));
  const Value z = ad::concat(std::span<const Value>(rows), 0);
  const std::size_t d = z.dim(1);
  const Value sq = ad::sum(ad::square(z), 1);
  if (stats) {
    for (double v : sq.data()) {
      if (v < kCosineFloor * kCosineFloor) ++stats->floored_norms;
    }
  }
  const Value norms = ad::sqrt(ad::clamp(sq, kCosineFloor * kCosineFloor, std::numeric_limits<double>::max()));
  const Value unit = z / ad::repeat(ad::reshape(norms, {n, 1}), 1, d);
  return ad::matmul(unit, ad::transpose(unit));
}

Value loss_kcl(const std::vector<Value>& projections, double beta, KclStats* stats) {
  const std::size_t n = projections.size();
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("loss_kcl: need an even number (>= 2) of projections");
  if (!(beta > 0.0)) throw std::invalid_argument("loss_kcl: beta must be positive");
  const Value cos = ad::reshape(cosine_matrix(projections, stats), {n * n, 1});
  std::vector<long> off_diagonal;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t r = 0; r < n; ++r) {
      if (r != p) off_diagonal.push_back(static_cast<long>(p * n + r));
    }
  }
  const Value logits = ad::scale(ad::reshape(ad::gather_rows(cos, off_diagonal), {n, n - 1}), beta);
  const Value log_probs = ad::reshape(ad::log_softmax(logits, 1), {n * (n - 1), 1});
  std::vector<long> positives;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t q = p ^ 1U;
    positives.push_back(static_cast<long>(p * (n - 1) + (q < p ? q : q - 1)));
  }
  return ad::scale(ad::sum_all(ad::gather_rows(log_probs, positives)), -1.0 / static_cast<double>(n));
}

}  // namespace kpx::heads
