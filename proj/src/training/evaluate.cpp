#include "kpx/training/evaluate.hpp"

#include <numeric>

#include "kpx/encoders/encoders.hpp"

namespace kpx::training {

namespace {

std::vector<std::size_t> all_or(const std::vector<std::size_t>& indices, std::size_t n) {
  if (!indices.empty()) return indices;
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

}  // namespace

Evaluation evaluate(const ad::ParamStore& params, const ModelConfig& config, const scenario::Dataset& dataset,
                    const std::vector<std::size_t>& indices) {
  Evaluation out;
  std::vector<metrics::ExampleOutcome> outcomes;
  for (std::size_t i : all_or(indices, dataset.scenes.size())) {
    const auto& scene = dataset.scenes.at(i);
    Prediction p = predict(params, scene, dataset.skeleton, config);
    outcomes.push_back({p.crossing_probability, scene.crossing_label, p.hypotheses.trajectories,
                        example_targets(scene, dataset.skeleton).future});
    out.predictions.push_back(std::move(p));
  }
  out.report = metrics::build_report(outcomes, config.heads.k, scenario::kFutureHz);
  return out;
}

metrics::EvalReport evaluate_constant_velocity(const scenario::Dataset& dataset,
                                               const std::vector<std::size_t>& indices) {
  std::vector<metrics::ExampleOutcome> outcomes;
  for (std::size_t i : all_or(indices, dataset.scenes.size())) {
    const auto& scene = dataset.scenes.at(i);
    const auto frame = encoders::target_frame(scene);
    metrics::Trajectory history;
    for (const auto& p : scene.target_history) history.push_back(frame.to_local(p));
    outcomes.push_back({0.5, scene.crossing_label,
                        {metrics::constant_velocity(history, scenario::kHistoryHz, scenario::kFutureFrames,
                                                    scenario::kFutureHz)},
                        example_targets(scene, dataset.skeleton).future});
  }
  return metrics::build_report(outcomes, 1, scenario::kFutureHz);
}

}  // namespace kpx::training
