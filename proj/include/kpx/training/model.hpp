#ifndef KPX_TRAINING_MODEL_HPP_
#define KPX_TRAINING_MODEL_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "kpx/autodiff/params.hpp"
#include "kpx/heads/heads.hpp"
#include "kpx/scenario/scene.hpp"
#include "kpx/skeleton/skeleton.hpp"

namespace kpx::training {

/// Everything that fixes the parameter layout and the decoding behaviour.
struct ModelConfig {
  heads::HeadConfig heads;
  bool zero_keypoints = false;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
std::uint64_t config_digest(const ModelConfig& config);

/// Encoder and head parameters, Glorot-initialised from `seed`.
ad::ParamStore make_model(const ModelConfig& config, std::uint64_t seed);
/// True for parameters only reachable through the KJP, KP or KCL heads.
bool is_auxiliary_parameter(const std::string& name);

struct LossWeights {
  double ar = 1.0;
  double tp = 1.0;
  double kjp = 0.01;
  double kp = 0.05;
  double kcl = 0.0001;
};

/// Scalar loss terms of one graph. Undefined members were not computed.
struct LossComponents {
  ad::Value ar;
  ad::Value target;
  ad::Value traj;
  ad::Value score;
  ad::Value kjp;
  ad::Value kp;
  ad::Value kcl;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(const std::string& component)
      : std::runtime_error("non-finite loss component: " + component), component_(component) {}
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

/// lambda_AR*L_AR + lambda_TP*(L_target + L_traj + L_score) + lambda_KJP*L_KJP
/// + lambda_KP*L_KP + lambda_KCL*L_KCL. Undefined components contribute
/// nothing. Throws NonFiniteLoss naming the first non-finite component.
ad::Value total_loss(const LossComponents& components, const LossWeights& weights);

/// Segment permutations drawn for one example: one KJP view, two KCL views.
struct AuxDraw {
  skeleton::Permutation kjp;
  skeleton::Permutation kcl_a;
  skeleton::Permutation kcl_b;
};

AuxDraw draw_permutations(std::mt19937_64& rng, int segments);

/// Supervision targets in the target-centric frame.
struct ExampleTargets {
  heads::Trajectory future;            // kFutureFrames points
  std::vector<double> future_keypoints;  // T_f x P x 3, relative to the last history center
};

ExampleTargets example_targets(const scenario::Scene& scene, const skeleton::SkeletonSpec& spec);

struct ExampleForward {
  LossComponents losses;            // kcl is left undefined
  std::array<ad::Value, 2> kcl_views;  // projections, undefined when KCL is off
  double p_complete = 0.0;
};

/// Which auxiliary branches to build. Branches with zero weight are skipped so
/// their parameters stay unbound.
struct ForwardOptions {
  bool kjp = true;
  bool kp = true;
  bool kcl = true;
  double score_alpha = 1.0;
};

ForwardOptions forward_options(const LossWeights& weights, const ModelConfig& config);

/// Builds every head loss of one example on the active graph.
ExampleForward forward_example(ad::ParamBinding& params, const scenario::Scene& scene,
                               const skeleton::SkeletonSpec& spec, const ModelConfig& config,
                               const AuxDraw& draw, const ForwardOptions& options);

/// Whole-batch objective on a single graph: component means over examples,
/// KCL over all 2N views, combined by total_loss. Reference for the trainer.
ad::Value batch_loss(ad::ParamBinding& params, const std::vector<const scenario::Scene*>& scenes,
                     const skeleton::SkeletonSpec& spec, const ModelConfig& config,
                     const std::vector<AuxDraw>& draws, const LossWeights& weights, double beta);

struct Prediction {
  double crossing_probability = 0.0;
  heads::TrajectoryHypotheses hypotheses;  // target-centric frame
};

Prediction predict(const ad::ParamStore& store, const scenario::Scene& scene,
                   const skeleton::SkeletonSpec& spec, const ModelConfig& config);

}  // namespace kpx::training

#endif  // KPX_TRAINING_MODEL_HPP_
