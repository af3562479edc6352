#ifndef KPX_TRAINING_EVALUATE_HPP_
#define KPX_TRAINING_EVALUATE_HPP_

#include <vector>

#include "kpx/metrics/metrics.hpp"
#include "kpx/scenario/dataset_io.hpp"
#include "kpx/training/model.hpp"

namespace kpx::training {

struct Evaluation {
  metrics::EvalReport report;
  std::vector<Prediction> predictions;  // one per evaluated scene
};

/// Runs predict on every scene (or the listed ones) and scores the result
/// against the target-centric ground truth.
Evaluation evaluate(const ad::ParamStore& params, const ModelConfig& config, const scenario::Dataset& dataset,
                    const std::vector<std::size_t>& indices = {});

/// Same report for a single constant-velocity hypothesis per scene; the
/// crossing probability is the 0.5 prior.
metrics::EvalReport evaluate_constant_velocity(const scenario::Dataset& dataset,
                                               const std::vector<std::size_t>& indices = {});

}  // namespace kpx::training

#endif  // KPX_TRAINING_EVALUATE_HPP_
