#include "kpx/training/model.hpp"

#include <cmath>

#include "kpx/autodiff/ops.hpp"
#include "kpx/encoders/encoders.hpp"
#include "kpx/scenario/geometry.hpp"

namespace kpx::training {

using ad::Value;

nlohmann::json to_json(const ModelConfig& config) {
  const auto& h = config.heads;
  return {{"grid_n", h.grid_n},     {"grid_extent", h.grid_extent}, {"k", h.k},
          {"nms_threshold", h.nms_threshold}, {"score_alpha", h.score_alpha}, {"segments", h.segments},
          {"joints", h.joints},     {"zero_keypoints", config.zero_keypoints}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.heads.grid_n = j.at("grid_n").get<std::size_t>();
  c.heads.grid_extent = j.at("grid_extent").get<double>();
  c.heads.k = j.at("k").get<std::size_t>();
  c.heads.nms_threshold = j.at("nms_threshold").get<double>();
  c.heads.score_alpha = j.at("score_alpha").get<double>();
  c.heads.segments = j.at("segments").get<int>();
  c.heads.joints = j.at("joints").get<std::size_t>();
  c.zero_keypoints = j.at("zero_keypoints").get<bool>();
  return c;
}

std::uint64_t config_digest(const ModelConfig& config) { return ad::hash_combine(0, to_json(config).dump()); }

ad::ParamStore make_model(const ModelConfig& config, std::uint64_t seed) {
  ad::ParamStore store;
  encoders::register_scene_encoder(store, seed);
  heads::register_heads(store, config.heads, seed);
  return store;
}

bool is_auxiliary_parameter(const std::string& name) {
  return name.starts_with("kjp.") || name.starts_with("kpp.") || name.starts_with("kcl.");
}

namespace {

void add_term(Value& acc, const Value& term, double weight, const char* name) {
  if (!term.defined()) return;
  if (!std::isfinite(term.item())) throw NonFiniteLoss(name);
  if (weight == 0.0) return;
  const Value t = ad::scale(term, weight);
  acc = acc.defined() ? acc + t : t;
}

}  // namespace

Value total_loss(const LossComponents& c, const LossWeights& w) {
  Value acc;
  add_term(acc, c.ar, w.ar, "ar");
  add_term(acc, c.target, w.tp, "target");
  add_term(acc, c.traj, w.tp, "traj");
  add_term(acc, c.score, w.tp, "score");
  add_term(acc, c.kjp, w.kjp, "kjp");
  add_term(acc, c.kp, w.kp, "kp");
  add_term(acc, c.kcl, w.kcl, "kcl");
  return acc.defined() ? acc : Value::scalar(0.0);
}

AuxDraw draw_permutations(std::mt19937_64& rng, int segments) {
  const std::uint64_t classes = skeleton::factorial(segments);
  AuxDraw d;
  d.kjp = skeleton::label_to_perm(rng() % classes, segments);
  d.kcl_a = skeleton::label_to_perm(rng() % classes, segments);
  d.kcl_b = skeleton::label_to_perm(rng() % classes, segments);
  return d;
}

ExampleTargets example_targets(const scenario::Scene& scene, const skeleton::SkeletonSpec& spec) {
  const scenario::TargetFrame frame = encoders::target_frame(scene);
  ExampleTargets t;
  for (const auto& p : scene.target_future) t.future.push_back(frame.to_local(p));

  const auto& hist = scene.keypoints_history;
  const skeleton::Vec3 c = skeleton::skeleton_center(spec, hist, hist.frames() - 1);
  const double cs = std::cos(scene.heading), sn = std::sin(scene.heading);
  const auto& fut = scene.keypoints_future;
  for (std::size_t f = 0; f < fut.frames(); ++f) {
    for (std::size_t j = 0; j < fut.joints(); ++j) {
      const skeleton::Vec3 v = fut.position(f, j);
      const double dx = v[0] - c[0], dy = v[1] - c[1];
      t.future_keypoints.insert(t.future_keypoints.end(), {cs * dx + sn * dy, -sn * dx + cs * dy, v[2] - c[2]});
    }
  }
  return t;
}

ForwardOptions forward_options(const LossWeights& weights, const ModelConfig& config) {
  return {weights.kjp > 0.0, weights.kp > 0.0, weights.kcl > 0.0, config.heads.score_alpha};
}

ExampleForward forward_example(ad::ParamBinding& params, const scenario::Scene& scene,
                               const skeleton::SkeletonSpec& spec, const ModelConfig& config,
                               const AuxDraw& draw, const ForwardOptions& options) {
  const auto& hc = config.heads;
  const ExampleTargets targets = example_targets(scene, spec);
  const auto emb = encoders::encode_scene(params, scene, spec, {config.zero_keypoints});

  ExampleForward out;
  const auto action = heads::action_head(params, emb.complete, emb.keypoints);
  out.p_complete = action.p_complete.item();
  out.losses.ar = heads::loss_ar(action, scene.crossing_label);

  // Candidates live in the target-centric frame, where the heading is +x.
  const auto candidates = heads::sample_target_candidates(0.0, hc.grid_n, hc.grid_extent);
  const heads::Point2 end = targets.future.back();
  const auto pred = heads::predict_targets(params, emb.complete, candidates);
  out.losses.target = heads::loss_target(pred, candidates, end);

  const Value forced = heads::generate_trajectory(params, emb.complete, Value::constant({1, 2}, {end[0], end[1]}));
  out.losses.traj = heads::loss_traj(forced, targets.future);

  std::vector<double> cand;
  for (const auto& p : candidates) cand.insert(cand.end(), {p[0], p[1]});
  const Value goals = Value::constant({candidates.size(), 2}, std::move(cand)) + pred.offsets;
  const Value trajectories = heads::generate_trajectory(params, emb.complete, goals);
  out.losses.score = heads::loss_score(heads::score_trajectories(params, emb.complete, trajectories), trajectories,
                                       targets.future, options.score_alpha);

  const auto& hist = scene.keypoints_history;
  auto view = [&](const skeleton::Permutation& perm) {
    const auto shuffled = skeleton::shuffle_segments(spec, hist, hc.segments, perm);
    return encoders::encode_keypoints(params, "kp", shuffled, spec, scene.heading);
  };
  if (options.kjp) {
    out.losses.kjp = heads::loss_kjp(heads::kjp_head(params, view(draw.kjp)),
                                     skeleton::perm_to_label(draw.kjp, hc.segments));
  }
  if (options.kp) out.losses.kp = heads::loss_kp(heads::kp_head(params, emb.keypoints), targets.future_keypoints);
  if (options.kcl) {
    out.kcl_views[0] = heads::kcl_project(params, view(draw.kcl_a));
    out.kcl_views[1] = heads::kcl_project(params, view(draw.kcl_b));
  }
  return out;
}

Value batch_loss(ad::ParamBinding& params, const std::vector<const scenario::Scene*>& scenes,
                 const skeleton::SkeletonSpec& spec, const ModelConfig& config,
                 const std::vector<AuxDraw>& draws, const LossWeights& weights, double beta) {
  const ForwardOptions options = forward_options(weights, config);
  const double inv = 1.0 / static_cast<double>(scenes.size());
  LossComponents mean;
  std::vector<Value> views;
  auto accumulate = [inv](Value& acc, const Value& v) {
    if (!v.defined()) return;
    acc = acc.defined() ? acc + ad::scale(v, inv) : ad::scale(v, inv);
  };
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto f = forward_example(params, *scenes[i], spec, config, draws.at(i), options);
    accumulate(mean.ar, f.losses.ar);
    accumulate(mean.target, f.losses.target);
    accumulate(mean.traj, f.losses.traj);
    accumulate(mean.score, f.losses.score);
    accumulate(mean.kjp, f.losses.kjp);
    accumulate(mean.kp, f.losses.kp);
    if (options.kcl) views.insert(views.end(), f.kcl_views.begin(), f.kcl_views.end());
  }
  if (options.kcl) mean.kcl = heads::loss_kcl(views, beta);
  return total_loss(mean, weights);
}

Prediction predict(const ad::ParamStore& store, const scenario::Scene& scene, const skeleton::SkeletonSpec& spec,
                   const ModelConfig& config) {
  const auto& hc = config.heads;
  ad::Graph graph;
  ad::ParamBinding params(store, false);
  const auto emb = encoders::encode_scene(params, scene, spec, {config.zero_keypoints});
  Prediction out;
  out.crossing_probability = heads::action_head(params, emb.complete, emb.keypoints).p_complete.item();

  const auto candidates = heads::sample_target_candidates(0.0, hc.grid_n, hc.grid_extent);
  const auto pred = heads::predict_targets(params, emb.complete, candidates);
  std::vector<double> cand;
  for (const auto& p : candidates) cand.insert(cand.end(), {p[0], p[1]});
  const Value goals = Value::constant({candidates.size(), 2}, std::move(cand)) + pred.offsets;
  const Value trajectories = heads::generate_trajectory(params, emb.complete, goals);
  const Value probs = ad::softmax(heads::score_trajectories(params, emb.complete, trajectories), 0);

  const std::size_t steps = scenario::kFutureFrames;
  std::vector<heads::Trajectory> all(candidates.size());
  const auto data = trajectories.data();
  for (std::size_t m = 0; m < all.size(); ++m) {
    for (std::size_t t = 0; t < steps; ++t) all[m].push_back({data[m * 2 * steps + 2 * t], data[m * 2 * steps + 2 * t + 1]});
  }
  const auto p = probs.data();
  out.hypotheses = heads::select_trajectories(all, std::vector<double>(p.begin(), p.end()), hc.k, hc.nms_threshold);
  return out;
}

}  // namespace kpx::training
