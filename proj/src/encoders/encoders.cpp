#include "kpx/encoders/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "kpx/autodiff/layers.hpp"

namespace kpx::encoders {

namespace {

using ad::Shape;
using ad::Value;

constexpr std::size_t kPartitions = 3;
constexpr std::size_t kGates = 3;

using ad::add_linear;
using ad::linear;

std::string block_name(const std::string& prefix, std::size_t block, const char* part) {
  return fmt::format("{}.block{}.{}", prefix, block + 1, part);
}

// [T*P, C] rows (t, p) -> spatial graph conv -> [T*P, Cout].
Value spatial_conv(ad::ParamBinding& p, const std::string& name, const Value& x, const Value& adjacency,
                   std::size_t frames, std::size_t joints) {
  const std::size_t c = x.dim(1);
  std::vector<long> joint_major(frames * joints);
  for (std::size_t j = 0; j < joints; ++j) {
    for (std::size_t t = 0; t < frames; ++t) joint_major[j * frames + t] = static_cast<long>(t * joints + j);
  }
  const Value xj = ad::reshape(ad::gather_rows(x, joint_major), {joints, frames * c});
  // Rows of `mixed` are (k, p, t) after the reshape below.
  const Value mixed = ad::reshape(ad::matmul(adjacency, xj), {kPartitions * joints * frames, c});
  std::vector<long> frame_major(frames * joints * kPartitions);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < joints; ++j) {
      for (std::size_t k = 0; k < kPartitions; ++k) {
        frame_major[(t * joints + j) * kPartitions + k] = static_cast<long>((k * joints + j) * frames + t);
      }
    }
  }
  const Value stacked = ad::reshape(ad::gather_rows(mixed, frame_major), {frames * joints, kPartitions * c});
  return linear(p, name, stacked);
}

// Temporal convolution with zero padding; output frames = ceil(T / stride).
Value temporal_conv(ad::ParamBinding& p, const std::string& name, const Value& x, std::size_t frames,
                    std::size_t joints, std::size_t stride) {
  const std::size_t c = x.dim(1);
  const std::size_t out_frames = (frames + stride - 1) / stride;
  const long pad = static_cast<long>(kTemporalKernel / 2);
  std::vector<long> rows;
  rows.reserve(out_frames * joints * kTemporalKernel);
  for (std::size_t t = 0; t < out_frames; ++t) {
    for (std::size_t j = 0; j < joints; ++j) {
      for (std::size_t d = 0; d < kTemporalKernel; ++d) {
        const long src = static_cast<long>(t * stride + d) - pad;
        rows.push_back(src < 0 || src >= static_cast<long>(frames) ? -1 : src * static_cast<long>(joints) +
                                                                                static_cast<long>(j));
      }
    }
  }
  const Value cols = ad::reshape(ad::gather_rows(x, rows), {out_frames * joints, kTemporalKernel * c});
  return linear(p, name, cols);
}

Value strided_frames(const Value& x, std::size_t frames, std::size_t joints, std::size_t stride) {
  if (stride == 1) return x;
  std::vector<long> rows;
  for (std::size_t t = 0; t < frames; t += stride) {
    for (std::size_t j = 0; j < joints; ++j) rows.push_back(static_cast<long>(t * joints + j));
  }
  return ad::gather_rows(x, rows);
}

// Three rounds of shared MLP + max-pool concatenation over contiguous groups.
std::vector<Value> subgraph_rounds(ad::ParamBinding& p, const std::string& prefix, const Value& vectors,
                                   const std::vector<std::size_t>& counts) {
  Value x = vectors;
  std::vector<Value> pooled(counts.size());
  for (std::size_t r = 0; r < kSubgraphRounds; ++r) {
    const std::string name = fmt::format("{}.round{}", prefix, r + 1);
    const Value h = ad::relu(linear(p, name + ".fc2", ad::relu(linear(p, name + ".fc1", x))));
    std::vector<Value> rows;
    std::size_t begin = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const Value group = ad::slice(h, 0, begin, begin + counts[i]);
      pooled[i] = ad::max(group, 0);
      if (r + 1 < kSubgraphRounds) {
        rows.push_back(ad::concat({group, ad::repeat(ad::reshape(pooled[i], {1, kEmbedding}), 0, counts[i])}, 1));
      }
      begin += counts[i];
    }
    if (r + 1 < kSubgraphRounds) x = ad::concat(std::span<const Value>(rows), 0);
  }
  return pooled;
}

bool lexicographic_less(const Value& a, const Value& b) {
  const auto da = a.data();
  const auto db = b.data();
  return std::lexicographical_compare(da.begin(), da.end(), db.begin(), db.end());
}

}  // namespace

void register_keypoints_encoder(ad::ParamStore& store, const std::string& prefix, std::uint64_t seed) {
  for (std::size_t b = 0; b < kBlockStrides.size(); ++b) {
    const std::size_t in = kBlockWidths[b];
    const std::size_t out = kBlockWidths[b + 1];
    add_linear(store, block_name(prefix, b, "gcn"), kPartitions * in, out, seed);
    add_linear(store, block_name(prefix, b, "tcn"), kTemporalKernel * out, out, seed);
    if (b > 0) add_linear(store, block_name(prefix, b, "res"), in, out, seed);
  }
}

void register_polyline_encoder(ad::ParamStore& store, const std::string& prefix, std::uint64_t seed) {
  for (std::size_t r = 0; r < kSubgraphRounds; ++r) {
    const std::string name = fmt::format("{}.round{}", prefix, r + 1);
    add_linear(store, name + ".fc1", r == 0 ? kVectorFeature : 2 * kEmbedding, kEmbedding, seed);
    add_linear(store, name + ".fc2", kEmbedding, kEmbedding, seed);
  }
}

void register_track_encoder(ad::ParamStore& store, const std::string& prefix, std::uint64_t seed) {
  store.add_glorot(prefix + ".w", 2, kGates * kEmbedding, seed);
  store.add_glorot(prefix + ".u", kEmbedding, kGates * kEmbedding, seed);
  store.add_zeros(prefix + ".b", {kGates * kEmbedding});
}

void register_global_interaction(ad::ParamStore& store, const std::string& prefix, std::uint64_t seed) {
  add_linear(store, prefix + ".target", 2 * kEmbedding, kEmbedding, seed);
  store.add_glorot(prefix + ".q", kEmbedding, kEmbedding, seed);
  store.add_glorot(prefix + ".k", kEmbedding, kEmbedding, seed);
  store.add_glorot(prefix + ".v", kEmbedding, kEmbedding, seed);
}

void register_scene_encoder(ad::ParamStore& store, std::uint64_t seed) {
  register_track_encoder(store, "track", seed);
  register_keypoints_encoder(store, "kp", seed);
  register_polyline_encoder(store, "poly", seed);
  register_global_interaction(store, "gi", seed);
}

Value stacked_adjacency(const skeleton::PartitionedAdjacency& adj) {
  const std::size_t p = adj.joints;
  std::vector<double> data;
  data.reserve(kPartitions * p * p);
  for (const auto* m : {&adj.root, &adj.centripetal, &adj.centrifugal}) data.insert(data.end(), m->begin(), m->end());
  return Value::constant({kPartitions * p, p}, std::move(data));
}

Value keypoints_input(const skeleton::KeypointsSequence& seq, const skeleton::SkeletonSpec& spec,
                      double heading) {
  const std::size_t frames = seq.frames();
  const std::size_t joints = seq.joints();
  const skeleton::Vec3 c = skeleton::skeleton_center(spec, seq, frames - 1);
  const double cs = std::cos(heading), sn = std::sin(heading);
  std::vector<double> data;
  data.reserve(frames * joints * kKeypointChannels);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < joints; ++j) {
      const skeleton::Vec3 v = seq.position(t, j);
      const double dx = v[0] - c[0], dy = v[1] - c[1];
      data.push_back(cs * dx + sn * dy);
      data.push_back(-sn * dx + cs * dy);
      data.push_back(v[2] - c[2]);
      data.push_back(seq.visibility(t, j));
    }
  }
  return Value::constant({frames * joints, kKeypointChannels}, std::move(data));
}

Value encode_keypoints(ad::ParamBinding& params, const std::string& prefix, const Value& input,
                       const Value& adjacency, std::size_t frames) {
  if (frames != scenario::kHistoryFrames) {
    throw std::invalid_argument(
        fmt::format("encode_keypoints: expected {} frames, got {}", scenario::kHistoryFrames, frames));
  }
  const std::size_t joints = adjacency.dim(1);
  if (input.rank() != 2 || input.dim(0) != frames * joints || input.dim(1) != kKeypointChannels) {
    throw ad::ShapeError("encode_keypoints", input.shape(), Shape{frames * joints, kKeypointChannels});
  }
  Value x = input;
  std::size_t t = frames;
  for (std::size_t b = 0; b < kBlockStrides.size(); ++b) {
    const std::size_t stride = kBlockStrides[b];
    const Value g = ad::relu(spatial_conv(params, block_name(prefix, b, "gcn"), x, adjacency, t, joints));
    Value y = temporal_conv(params, block_name(prefix, b, "tcn"), g, t, joints, stride);
    if (b > 0) y = y + linear(params, block_name(prefix, b, "res"), strided_frames(x, t, joints, stride));
    x = ad::relu(y);
    t = (t + stride - 1) / stride;
  }
  return ad::mean(x, 0);
}

Value encode_keypoints(ad::ParamBinding& params, const std::string& prefix,
                       const skeleton::KeypointsSequence& seq, const skeleton::SkeletonSpec& spec,
                       double heading) {
  const auto mean = skeleton::mean_pose(seq);
  const auto adj = skeleton::build_partitioned_adjacency(spec, mean);
  return encode_keypoints(params, prefix, keypoints_input(seq, spec, heading), stacked_adjacency(adj),
                          seq.frames());
}

std::vector<double> polyline_features(const scenario::Polyline& line, const scenario::TargetFrame& frame) {
  std::vector<double> out;
  out.reserve(line.vectors.size() * kVectorFeature);
  for (const auto& v : line.vectors) {
    const auto s = frame.to_local(v.start);
    const auto e = frame.to_local(v.end);
    out.insert(out.end(), {s[0], s[1], e[0], e[1]});
    out.insert(out.end(), v.attribute.begin(), v.attribute.end());
  }
  return out;
}

std::vector<Value> encode_polylines(ad::ParamBinding& params, const std::string& prefix,
                                    const std::vector<std::vector<double>>& features) {
  if (features.empty()) return {};
  std::vector<double> all;
  std::vector<std::size_t> counts;
  for (const auto& f : features) {
    if (f.empty() || f.size() % kVectorFeature != 0) {
      throw std::invalid_argument("encode_polylines: polyline needs at least one 8-number vector");
    }
    counts.push_back(f.size() / kVectorFeature);
    all.insert(all.end(), f.begin(), f.end());
  }
  const std::size_t rows = all.size() / kVectorFeature;
  return subgraph_rounds(params, prefix, Value::constant({rows, kVectorFeature}, std::move(all)), counts);
}

Value encode_polyline_subgraph(ad::ParamBinding& params, const std::string& prefix,
                               const scenario::Polyline& line, const scenario::TargetFrame& frame) {
  if (line.vectors.empty()) throw std::invalid_argument("encode_polyline_subgraph: empty polyline");
  return encode_polylines(params, prefix, {polyline_features(line, frame)}).front();
}

Value encode_track(ad::ParamBinding& params, const std::string& prefix, const Value& history) {
  if (history.rank() != 2 || history.dim(1) != 2) {
    throw ad::ShapeError("encode_track", history.shape(), "expected [T, 2]");
  }
  for (double v : history.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("encode_track: non-finite position");
  }
  const std::size_t h = kEmbedding;
  const Value& u = params(prefix + ".u");
  const Value& b = params(prefix + ".b");
  // Input contributions for every step at once.
  const Value xw = ad::add_row(ad::matmul(history, params(prefix + ".w")), b);
  Value state = Value::zeros({1, h});
  for (std::size_t t = 0; t < history.dim(0); ++t) {
    const Value xt = ad::slice(xw, 0, t, t + 1);
    const Value hu = ad::matmul(state, u);
    const Value z = ad::sigmoid(ad::slice(xt, 1, 0, h) + ad::slice(hu, 1, 0, h));
    const Value r = ad::sigmoid(ad::slice(xt, 1, h, 2 * h) + ad::slice(hu, 1, h, 2 * h));
    const Value n = ad::tanh(ad::slice(xt, 1, 2 * h, 3 * h) + r * ad::slice(hu, 1, 2 * h, 3 * h));
    state = ad::add_scalar(-z, 1.0) * n + z * state;
  }
  return ad::reshape(state, {h});
}

AttentionResult global_interaction(ad::ParamBinding& params, const std::string& prefix,
                                   const Value& target_node, std::vector<Value> polyline_nodes) {
  if (target_node.shape() != Shape{2 * kEmbedding}) {
    throw ad::ShapeError("global_interaction", target_node.shape(), Shape{2 * kEmbedding});
  }
  // Canonical order so the attention sum does not depend on input order.
  std::stable_sort(polyline_nodes.begin(), polyline_nodes.end(), lexicographic_less);
  std::vector<Value> rows{linear(params, prefix + ".target", ad::reshape(target_node, {1, 2 * kEmbedding}))};
  for (const auto& node : polyline_nodes) {
    if (node.shape() != Shape{kEmbedding}) throw ad::ShapeError("global_interaction", node.shape(), Shape{kEmbedding});
    rows.push_back(ad::reshape(node, {1, kEmbedding}));
  }
  const Value nodes = ad::concat(std::span<const Value>(rows), 0);
  const Value q = ad::matmul(rows.front(), params(prefix + ".q"));
  const Value k = ad::matmul(nodes, params(prefix + ".k"));
  const Value v = ad::matmul(nodes, params(prefix + ".v"));
  const Value logits = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(kEmbedding)));
  const Value attn = ad::softmax(logits, 1);
  AttentionResult out;
  out.output = ad::reshape(ad::matmul(attn, v), {kEmbedding});
  out.weights.assign(attn.data().begin(), attn.data().end());
  return out;
}

scenario::TargetFrame target_frame(const scenario::Scene& scene) {
  return scenario::TargetFrame(scene.target_history.back(), scene.heading);
}

SceneEmbeddings encode_scene(ad::ParamBinding& params, const scenario::Scene& scene,
                             const skeleton::SkeletonSpec& spec, const SceneEncoderOptions& options) {
  const scenario::TargetFrame frame = target_frame(scene);
  std::vector<double> track;
  for (const auto& p : scene.target_history) {
    const auto q = frame.to_local(p);
    track.insert(track.end(), {q[0], q[1]});
  }
  const Value history = Value::constant({scene.target_history.size(), 2}, std::move(track));
  const Value track_embedding = encode_track(params, "track", history);

  Value keypoints = encode_keypoints(params, "kp", scene.keypoints_history, spec, scene.heading);
  if (options.zero_keypoints) keypoints = Value::zeros({kEmbedding});

  std::vector<std::vector<double>> features;
  for (const auto* lines : {&scene.roadgraph, &scene.context_agents}) {
    for (const auto& line : *lines) features.push_back(polyline_features(line, frame));
  }
  const auto nodes = encode_polylines(params, "poly", features);
  const auto attended = global_interaction(params, "gi", ad::concat({track_embedding, keypoints}, 0), nodes);

  SceneEmbeddings out;
  out.keypoints = keypoints;
  out.context = attended.output;
  out.complete = ad::concat({out.context, out.keypoints}, 0);
  return out;
}

}  // namespace kpx::encoders
