#ifndef KPX_HEADS_HEADS_HPP_
#define KPX_HEADS_HEADS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kpx/autodiff/ops.hpp"
#include "kpx/autodiff/params.hpp"
#include "kpx/scenario/scene.hpp"

namespace kpx::heads {

using scenario::Point2;
using Trajectory = std::vector<Point2>;

inline constexpr std::size_t kHidden = 64;
inline constexpr std::size_t kCompleteSize = 128;
inline constexpr std::size_t kKeypointsSize = 64;
inline constexpr std::size_t kTrajectoryValues = scenario::kFutureFrames * 2;
inline constexpr double kBceClamp = 1e-7;
inline constexpr double kHuberDelta = 1.0;
inline constexpr double kCosineFloor = 1e-12;

/// Hyperparameters of the decoding heads.
struct HeadConfig {
  std::size_t grid_n = 15;
  double grid_extent = 6.0;
  std::size_t k = 6;
  double nms_threshold = 1.0;
  double score_alpha = 1.0;
  int segments = 4;
  std::size_t joints = 13;
};

/// Registers the parameters of every head: "ar", "tgt", "traj", "score",
/// "kjp", "kpp", "kcl".
void register_heads(ad::ParamStore& store, const HeadConfig& config, std::uint64_t seed);

// ---- Crossing action ----------------------------------------------------

struct ActionOutput {
  ad::Value p_complete;   // scalar, the reported probability
  ad::Value p_keypoints;  // scalar, auxiliary classifier on the keypoints embedding
};

ActionOutput action_head(ad::ParamBinding& params, const ad::Value& complete, const ad::Value& keypoints);
/// Binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
ad::Value bce(const ad::Value& p, int label);
ad::Value loss_ar(const ActionOutput& out, int label);

// ---- Target prediction --------------------------------------------------

/// grid_n x grid_n lattice over [-extent, extent]^2 rotated by heading.
/// Throws std::invalid_argument for an even grid_n.
std::vector<Point2> sample_target_candidates(double heading, std::size_t grid_n, double extent);

struct TargetPrediction {
  ad::Value logits;   // [M]
  ad::Value offsets;  // [M, 2]
};

TargetPrediction predict_targets(ad::ParamBinding& params, const ad::Value& complete,
                                 const std::vector<Point2>& candidates);
std::size_t nearest_candidate(const std::vector<Point2>& candidates, const Point2& point);
/// Cross-entropy on the nearest candidate plus Huber on its offset residual.
ad::Value loss_target(const TargetPrediction& pred, const std::vector<Point2>& candidates, const Point2& gt_endpoint);

// ---- Trajectory generation ----------------------------------------------

/// `targets` is [M, 2]; returns [M, T_f * 2] (x0, y0, x1, y1, ...).
ad::Value generate_trajectory(ad::ParamBinding& params, const ad::Value& complete, const ad::Value& targets);
/// Mean over steps of the per-step Huber loss summed over both coordinates.
/// `pred` is [1, T_f * 2] or [T_f * 2].
ad::Value loss_traj(const ad::Value& pred, const Trajectory& gt);

// ---- Scoring and selection ----------------------------------------------

/// `trajectories` is [M, T_f * 2]; returns logits [M].
ad::Value score_trajectories(ad::ParamBinding& params, const ad::Value& complete, const ad::Value& trajectories);
/// psi(s) proportional to exp(-D(s, gt) / alpha), D = max per-step distance.
std::vector<double> teacher_distribution(const ad::Value& trajectories, const Trajectory& gt, double alpha);
/// KL(psi || softmax(logits)). Equals the cross-entropy minus the constant
/// entropy of psi, so both share the same gradient.
ad::Value loss_score(const ad::Value& logits, const std::vector<double>& teacher);
/// log psi as a differentiable function of `trajectories` [M, T_f * 2].
ad::Value teacher_log_distribution(const ad::Value& trajectories, const Trajectory& gt, double alpha);
/// KL(psi || softmax(logits)) with psi built from `trajectories`, so the loss
/// differentiates through both the scorer and the generated trajectories.
ad::Value loss_score(const ad::Value& logits, const ad::Value& trajectories, const Trajectory& gt, double alpha);

struct TrajectoryHypotheses {
  std::vector<Trajectory> trajectories;
  std::vector<double> scores;  // descending, sums to 1
  std::vector<std::size_t> indices;
};

/// Greedy selection by descending score, rejecting any trajectory whose
/// endpoint lies closer than `threshold` to an accepted endpoint.
TrajectoryHypotheses select_trajectories(const std::vector<Trajectory>& trajectories,
                                         const std::vector<double>& scores, std::size_t k, double threshold);

// ---- Auxiliary keypoints heads ------------------------------------------

ad::Value kjp_head(ad::ParamBinding& params, const ad::Value& keypoints);
ad::Value loss_kjp(const ad::Value& logits, std::uint64_t label);

ad::Value kp_head(ad::ParamBinding& params, const ad::Value& keypoints);
/// Mean squared error over every frame, joint and axis.
ad::Value loss_kp(const ad::Value& pred, const std::vector<double>& gt);

ad::Value kcl_project(ad::ParamBinding& params, const ad::Value& keypoints);

struct KclStats {
  std::size_t floored_norms = 0;
};

/// [n, n] pairwise cosine similarities; norms are floored at 1e-12.
ad::Value cosine_matrix(const std::vector<ad::Value>& projections, KclStats* stats = nullptr);

/// Contrastive loss over 2N projections; views 2i and 2i+1 form a positive
/// pair. Mean over all 2N anchors.
ad::Value loss_kcl(const std::vector<ad::Value>& projections, double beta, KclStats* stats = nullptr);

}  // namespace kpx::heads

#endif  // KPX_HEADS_HEADS_HPP_
