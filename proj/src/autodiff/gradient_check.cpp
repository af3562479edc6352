#include "kpx/autodiff/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kpx::ad {

namespace {

struct Evaluation {
  double loss;
  std::uint64_t branches;
};

Evaluation evaluate(const std::function<Value()>& loss_fn) {
  detail::BranchTrace trace;
  const Value loss = loss_fn();
  return {loss.item(), trace.digest()};
}

}  // namespace

GradientCheckReport gradient_check(const std::function<Value()>& loss_fn,
                                   std::span<Value> params,
                                   const GradientCheckOptions& options) {
  if (!(options.epsilon > 0.0 && options.epsilon <= 1e-3)) {
    throw std::invalid_argument("gradient_check: epsilon must be in (0, 1e-3]");
  }
  for (Value& p : params) p.zero_grad();
  {
    Graph graph;
    const Value loss = loss_fn();
    graph.backward(loss);
  }

  // Coordinates with a non-zero analytic gradient are preferred; a quarter of
  // the budget still goes to zero-gradient coordinates to catch missing paths.
  std::vector<std::pair<std::size_t, std::size_t>> live, dead;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto g = params[k].grad();
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      (g[i] != 0.0 ? live : dead).emplace_back(k, i);
    }
  }
  std::mt19937_64 rng(options.seed);
  std::shuffle(live.begin(), live.end(), rng);
  std::shuffle(dead.begin(), dead.end(), rng);
  const std::size_t budget = options.max_coordinates;
  const std::size_t dead_quota = std::min(dead.size(), budget / 4);
  const std::size_t live_take = std::min(live.size(), budget - dead_quota);
  std::vector<std::pair<std::size_t, std::size_t>> coords(live.begin(), live.begin() + live_take);
  const std::size_t dead_take = std::min(dead.size(), budget - live_take);
  coords.insert(coords.end(), dead.begin(), dead.begin() + dead_take);

  GradientCheckReport report;
  const double eps = options.epsilon;
  for (const auto& [k, i] : coords) {
    auto data = params[k].mutable_data();
    const double analytic = params[k].grad()[i];
    const double original = data[i];
    data[i] = original + eps;
    const Evaluation plus = evaluate(loss_fn);
    data[i] = original - eps;
    const Evaluation minus = evaluate(loss_fn);
    data[i] = original;
    if (!std::isfinite(plus.loss) || !std::isfinite(minus.loss)) {
      throw std::runtime_error("gradient_check: non-finite loss at perturbed parameter " +
                               std::to_string(k) + "[" + std::to_string(i) + "]");
    }
    if (plus.branches != minus.branches) {
      ++report.skipped_at_kinks;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * eps);
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
    report.max_relative_error = std::max(report.max_relative_error, err);
    ++report.checked;
  }
  return report;
}

}  // namespace kpx::ad
