#ifndef KPX_ENCODERS_ENCODERS_HPP_
#define KPX_ENCODERS_ENCODERS_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kpx/autodiff/ops.hpp"
#include "kpx/autodiff/params.hpp"
#include "kpx/scenario/geometry.hpp"
#include "kpx/scenario/scene.hpp"
#include "kpx/skeleton/skeleton.hpp"

namespace kpx::encoders {

inline constexpr std::size_t kEmbedding = 64;
inline constexpr std::size_t kKeypointChannels = 4;  // x, y, z, visibility
inline constexpr std::size_t kTemporalKernel = 5;
inline constexpr std::array<std::size_t, 4> kBlockWidths{4, 16, 32, 64};
inline constexpr std::array<std::size_t, 3> kBlockStrides{1, 2, 2};
inline constexpr std::size_t kVectorFeature = 4 + scenario::kAttributeSize;
inline constexpr std::size_t kSubgraphRounds = 3;

// Parameter registration. Weight matrices are Glorot-initialised from
// (seed, name); every bias starts at zero.
void register_keypoints_encoder(ad::ParamStore& store, const std::string& prefix, std::uint64_t seed);
void register_polyline_encoder(ad::ParamStore& store, const std::string& prefix, std::uint64_t seed);
void register_track_encoder(ad::ParamStore& store, const std::string& prefix, std::uint64_t seed);
void register_global_interaction(ad::ParamStore& store, const std::string& prefix, std::uint64_t seed);
/// All encoder parameters under the prefixes used by encode_scene.
void register_scene_encoder(ad::ParamStore& store, std::uint64_t seed);

/// Stacks root, centripetal and centrifugal matrices into a [3P, P] constant.
ad::Value stacked_adjacency(const skeleton::PartitionedAdjacency& adj);

/// [T*P, 4] rows in frame-major order: coordinates relative to the skeleton
/// center of the last frame, rotated so `heading` maps to +x, then visibility.
ad::Value keypoints_input(const skeleton::KeypointsSequence& seq, const skeleton::SkeletonSpec& spec,
                          double heading);

/// Three spatio-temporal graph conv blocks followed by global average pooling.
/// `input` is [frames*joints, 4], `adjacency` is [3*joints, joints]. Returns [64].
ad::Value encode_keypoints(ad::ParamBinding& params, const std::string& prefix, const ad::Value& input,
                           const ad::Value& adjacency, std::size_t frames);

/// Convenience overload: builds input and adjacency from the sequence.
ad::Value encode_keypoints(ad::ParamBinding& params, const std::string& prefix,
                           const skeleton::KeypointsSequence& seq, const skeleton::SkeletonSpec& spec,
                           double heading);

/// Per-vector features [start.x, start.y, end.x, end.y, attribute...] in the
/// given target frame.
std::vector<double> polyline_features(const scenario::Polyline& line, const scenario::TargetFrame& frame);

/// Encodes several polylines at once; `features[i]` holds n_i*8 numbers.
/// Returns one [64] embedding per polyline.
std::vector<ad::Value> encode_polylines(ad::ParamBinding& params, const std::string& prefix,
                                        const std::vector<std::vector<double>>& features);

ad::Value encode_polyline_subgraph(ad::ParamBinding& params, const std::string& prefix,
                                   const scenario::Polyline& line, const scenario::TargetFrame& frame);

/// Gated recurrent encoder over [T, 2] positions; returns the final hidden [64].
ad::Value encode_track(ad::ParamBinding& params, const std::string& prefix, const ad::Value& history);

struct AttentionResult {
  ad::Value output;                 // [64]
  std::vector<double> weights;      // target, then polyline nodes in canonical order
};

/// Single-head self-attention over {target} and the polyline nodes; returns
/// the attended feature of the target. `target_node` is [128] (track ‖ keypoints).
AttentionResult global_interaction(ad::ParamBinding& params, const std::string& prefix,
                                   const ad::Value& target_node, std::vector<ad::Value> polyline_nodes);

struct SceneEmbeddings {
  ad::Value keypoints;  // [64]
  ad::Value context;    // [64]
  ad::Value complete;   // [128] = context ‖ keypoints
};

struct SceneEncoderOptions {
  /// Ablation: feed zeros instead of the keypoints embedding downstream.
  bool zero_keypoints = false;
};

SceneEmbeddings encode_scene(ad::ParamBinding& params, const scenario::Scene& scene,
                             const skeleton::SkeletonSpec& spec, const SceneEncoderOptions& options = {});

/// Target-centric frame of a scene: last history point, scene heading.
scenario::TargetFrame target_frame(const scenario::Scene& scene);

}  // namespace kpx::encoders

#endif  // KPX_ENCODERS_ENCODERS_HPP_
