#include "kpx/scenario/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "kpx/scenario/geometry.hpp"

namespace kpx::scenario {

namespace {

using skeleton::KeypointsSequence;
using skeleton::SkeletonSpec;
using skeleton::Vec3;

constexpr double kPi = std::numbers::pi;
constexpr double kDt = 1.0 / kHistoryHz;

// Standing body dimensions (meters).
constexpr double kPelvisHeight = 0.95;
constexpr double kHipHalfWidth = 0.10;
constexpr double kShoulderHeight = 1.45;
constexpr double kShoulderHalfWidth = 0.19;
constexpr double kNoseHeight = 1.62;
constexpr double kStature = 1.75;
// A full bend lowers nose and shoulders by 40% of stature.
constexpr double kBendDrop = 0.4 * kStature;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool coin(std::mt19937_64& rng) { return std::bernoulli_distribution(0.5)(rng); }

double quantize(double v) {
  const double q = std::round(v * 1e6) / 1e6;
  return q == 0.0 ? 0.0 : q;
}

double time_of(std::size_t frame) {
  return (static_cast<double>(frame) - static_cast<double>(kCurrentFrame)) * kDt;
}

MotionProfile empty_profile() {
  MotionProfile p;
  p.pelvis.assign(kGaitFrames, Point2{0, 0});
  p.speed.assign(kGaitFrames, 0.0);
  p.body_yaw.assign(kGaitFrames, 0.0);
  p.head_yaw.assign(kGaitFrames, 0.0);
  p.bend.assign(kGaitFrames, 0.0);
  p.wave.assign(kGaitFrames, 0.0);
  return p;
}

// Integrates speed along `travel_yaw` and anchors the current frame at `anchor`.
void integrate(MotionProfile& p, const std::vector<double>& travel_yaw, const Point2& anchor) {
  Point2 pos{0, 0};
  for (std::size_t f = 0; f < kGaitFrames; ++f) {
    p.pelvis[f] = pos;
    pos[0] += kDt * p.speed[f] * std::cos(travel_yaw[f]);
    pos[1] += kDt * p.speed[f] * std::sin(travel_yaw[f]);
  }
  const Point2 cur = p.pelvis[kCurrentFrame];
  for (auto& q : p.pelvis) {
    q[0] += anchor[0] - cur[0];
    q[1] += anchor[1] - cur[1];
  }
}

// Slow idle head motion shared by every kind.
void idle_head(MotionProfile& p, std::mt19937_64& rng, double amplitude) {
  const double w = uniform(rng, 0.5, 1.5);
  const double phi = uniform(rng, 0, 2 * kPi);
  for (std::size_t f = 0; f < kGaitFrames; ++f) {
    p.head_yaw[f] = amplitude * std::sin(w * time_of(f) + phi);
  }
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3 - 2 * x);
}

// Plans are built in a canonical frame: the pedestrian starts on the
// south sidewalk (y < -kRoadHalfWidth) and crosses towards +y.
MotionProfile plan_motion(ScenarioKind kind, std::mt19937_64& rng) {
  MotionProfile p = empty_profile();
  p.phase0 = uniform(rng, 0, 2 * kPi);
  std::vector<double> travel(kGaitFrames, 0.0);
  Point2 anchor{0, 0};
  idle_head(p, rng, 0.15);

  switch (kind) {
    case ScenarioKind::kCrossWalkway: {
      const double v = uniform(rng, 1.0, 1.7);
      const double yaw = kPi / 2 + std::clamp(std::normal_distribution<double>(0, 0.07)(rng), -0.2, 0.2);
      for (std::size_t f = 0; f < kGaitFrames; ++f) {
        p.speed[f] = v;
        travel[f] = yaw;
        p.body_yaw[f] = yaw;
      }
      anchor = {uniform(rng, -1.5, 1.5), uniform(rng, -3.3, -0.8)};
      break;
    }
    case ScenarioKind::kCrossJaywalk: {
      const double side = coin(rng) ? 1.0 : -1.0;
      if (coin(rng)) {
        // Diagonal crossing already under way.
        const double v = uniform(rng, 1.1, 1.8);
        const double yaw = kPi / 2 + side * uniform(rng, 0.2, 0.8);
        for (std::size_t f = 0; f < kGaitFrames; ++f) {
          p.speed[f] = v;
          travel[f] = yaw;
          p.body_yaw[f] = yaw;
        }
        anchor = {side * uniform(rng, 6, 25), uniform(rng, -3.3, -1.5)};
      } else {
        // Walking along the curb, the torso turns towards the road first and
        // the path follows with a lag.
        const double v = uniform(rng, 1.0, 1.6);
        const double yaw0 = coin(rng) ? 0.0 : kPi;
        const double yaw1 = yaw0 == 0.0 ? kPi / 2 - uniform(rng, 0.0, 0.4) : kPi / 2 + uniform(rng, 0.0, 0.4);
        const double turn_start = -uniform(rng, 0.3, 0.6);
        const double turn_time = 0.8;
        const double lag = 0.3;
        for (std::size_t f = 0; f < kGaitFrames; ++f) {
          const double t = time_of(f);
          p.speed[f] = v;
          p.body_yaw[f] = yaw0 + (yaw1 - yaw0) * smoothstep((t - turn_start) / turn_time);
          travel[f] = yaw0 + (yaw1 - yaw0) * smoothstep((t - turn_start - lag) / turn_time);
          p.head_yaw[f] += 0.3 * (yaw1 - yaw0) * smoothstep((t - turn_start + 0.3) / 0.4);
        }
        anchor = {side * uniform(rng, 6, 25), uniform(rng, -4.4, -3.7)};
      }
      break;
    }
    case ScenarioKind::kParallelSidewalk: {
      const double v = uniform(rng, 0.8, 1.7);
      const double yaw = (coin(rng) ? 0.0 : kPi) + uniform(rng, -0.05, 0.05);
      for (std::size_t f = 0; f < kGaitFrames; ++f) {
        p.speed[f] = v;
        travel[f] = yaw;
        p.body_yaw[f] = yaw;
      }
      anchor = {uniform(rng, -25, 25), uniform(rng, -7.0, -4.6)};
      break;
    }
    case ScenarioKind::kStandAtCurb: {
      const double yaw = coin(rng) ? kPi / 2 + uniform(rng, -0.5, 0.5)
                                   : (coin(rng) ? 0.0 : kPi) + uniform(rng, -0.3, 0.3);
      std::fill(p.body_yaw.begin(), p.body_yaw.end(), yaw);
      idle_head(p, rng, 0.4);
      anchor = {uniform(rng, -25, 25), uniform(rng, -4.3, -3.7)};
      break;
    }
    case ScenarioKind::kBendDownOnRoad: {
      const double yaw = uniform(rng, -kPi, kPi);
      std::fill(p.body_yaw.begin(), p.body_yaw.end(), yaw);
      std::fill(p.bend.begin(), p.bend.end(), 1.0);
      anchor = {uniform(rng, -25, 25), uniform(rng, -3.0, 3.0)};
      break;
    }
    case ScenarioKind::kWaveThenCross: {
      const double yaw0 = (coin(rng) ? 0.0 : kPi) + uniform(rng, -0.3, 0.3);
      const double yaw1 = kPi / 2;
      const double stop_wave = -uniform(rng, 0.4, 0.8);
      const double v = uniform(rng, 1.0, 1.5);
      const double go = stop_wave + 0.3;
      for (std::size_t f = 0; f < kGaitFrames; ++f) {
        const double t = time_of(f);
        p.wave[f] = t < stop_wave ? 1.0 : 1.0 - smoothstep((t - stop_wave) / 0.2);
        p.body_yaw[f] = yaw0 + (yaw1 - yaw0) * smoothstep((t - stop_wave) / 0.6);
        p.speed[f] = v * smoothstep((t - go) / 1.2);
        travel[f] = yaw1;
      }
      anchor = {uniform(rng, -25, 25), uniform(rng, -4.2, -3.6)};
      break;
    }
  }
  integrate(p, travel, anchor);
  return p;
}

void rotate_half_turn(MotionProfile& p) {
  for (auto& q : p.pelvis) q = {-q[0], -q[1]};
  for (double& y : p.body_yaw) y += kPi;
}

}  // namespace

KeypointsSequence render_gait(const MotionProfile& profile, const SkeletonSpec& spec,
                              std::mt19937_64& rng) {
  const std::size_t frames = profile.pelvis.size();
  const std::size_t joints = spec.joint_count();
  if (joints != 13) throw std::invalid_argument("render_gait: expects the 13-joint skeleton");
  KeypointsSequence seq(frames, joints);
  std::normal_distribution<double> noise(0.0, kJointNoiseSigma);
  std::uniform_real_distribution<double> vis(0.8, 1.0);
  std::bernoulli_distribution dropout(kDropoutRate);

  const int nose = spec.joint_index("nose");
  const int ls = spec.joint_index("left_shoulder"), rs = spec.joint_index("right_shoulder");
  const int le = spec.joint_index("left_elbow"), re = spec.joint_index("right_elbow");
  const int lw = spec.joint_index("left_wrist"), rw = spec.joint_index("right_wrist");
  const int lh = spec.joint_index("left_hip"), rh = spec.joint_index("right_hip");
  const int lk = spec.joint_index("left_knee"), rk = spec.joint_index("right_knee");
  const int la = spec.joint_index("left_ankle"), ra = spec.joint_index("right_ankle");
  const auto& centers = spec.center_joints();

  double phase = profile.phase0;
  for (std::size_t f = 0; f < frames; ++f) {
    const double speed = std::min(profile.speed[f], kMaxSpeed);
    const double amp = speed / 1.4;
    const double bend = profile.bend[f];
    const double wave = profile.wave[f];
    const double yaw = profile.body_yaw[f];
    const double c = std::cos(yaw), s = std::sin(yaw);
    const Point2 base = profile.pelvis[f];
    // Body-frame (forward, left, up) to world.
    auto place = [&](double fwd, double left, double up) -> Vec3 {
      return {base[0] + c * fwd - s * left, base[1] + s * fwd + c * left, up};
    };
    const double sw = std::sin(phase);
    const double leg = 0.3 * amp * sw;
    const double arm = 0.18 * amp * sw;
    const double lift_l = 0.08 * amp * std::max(0.0, std::cos(phase));
    const double lift_r = 0.08 * amp * std::max(0.0, -std::cos(phase));

    std::array<Vec3, 13> body{};
    const double sh_fwd = 0.35 * bend;
    const double sh_up = kShoulderHeight - kBendDrop * bend;
    body[lh] = place(0, kHipHalfWidth, kPelvisHeight - 0.1 * bend);
    body[rh] = place(0, -kHipHalfWidth, kPelvisHeight - 0.1 * bend);
    body[ls] = place(sh_fwd, kShoulderHalfWidth, sh_up);
    body[rs] = place(sh_fwd, -kShoulderHalfWidth, sh_up);
    const double head = profile.head_yaw[f];
    body[nose] = place(sh_fwd + 0.1 * bend + 0.1 * std::cos(head), 0.1 * std::sin(head),
                       kNoseHeight - kBendDrop * bend);
    // Arms swing against the legs; a bend reaches the hands towards the ground.
    const double reach_up = 0.25 * bend;
    body[le] = place(sh_fwd - 0.5 * arm + 0.15 * bend, kShoulderHalfWidth + 0.03, sh_up - 0.3);
    body[lw] = place(sh_fwd - arm + 0.2 * bend, kShoulderHalfWidth + 0.04,
                     (1 - bend) * (sh_up - 0.58) + bend * reach_up);
    const Vec3 r_elbow_down = place(sh_fwd + 0.5 * arm + 0.15 * bend, -kShoulderHalfWidth - 0.03, sh_up - 0.3);
    const Vec3 r_wrist_down = place(sh_fwd + arm + 0.2 * bend, -kShoulderHalfWidth - 0.04,
                                    (1 - bend) * (sh_up - 0.58) + bend * reach_up);
    const double t = static_cast<double>(f) * kDt;
    const double wag = 0.15 * std::sin(2 * kPi * 1.0 * t);
    const Vec3 r_elbow_up = place(sh_fwd + 0.05, -kShoulderHalfWidth - 0.25, sh_up + 0.05);
    const Vec3 r_wrist_up = place(sh_fwd + 0.05, -kShoulderHalfWidth - 0.3 + wag, sh_up + 0.4);
    for (int a = 0; a < 3; ++a) {
      body[re][a] = (1 - wave) * r_elbow_down[a] + wave * r_elbow_up[a];
      body[rw][a] = (1 - wave) * r_wrist_down[a] + wave * r_wrist_up[a];
    }
    body[lk] = place(0.5 * leg + 0.1 * bend, kHipHalfWidth, 0.5 + 0.5 * lift_l);
    body[rk] = place(-0.5 * leg + 0.1 * bend, -kHipHalfWidth, 0.5 + 0.5 * lift_r);
    body[la] = place(leg, kHipHalfWidth, 0.08 + lift_l);
    body[ra] = place(-leg, -kHipHalfWidth, 0.08 + lift_r);

    for (std::size_t j = 0; j < joints; ++j) {
      Vec3 v = body[j];
      for (double& x : v) x += noise(rng);
      double visibility = vis(rng);
      const bool is_center = std::find(centers.begin(), centers.end(), static_cast<int>(j)) != centers.end();
      if (!is_center && dropout(rng)) {
        visibility = 0.0;
        if (f > 0) {
          v = seq.position(f - 1, j);
        } else {
          v = {base[0], base[1], kPelvisHeight};
        }
      }
      seq.set_position(f, j, v);
      seq.set_visibility(f, j, visibility);
    }
    // Stride frequency grows with speed.
    phase += 2 * kPi * (0.6 + 0.25 * speed) * kDt;
  }
  return seq;
}

KeypointsSequence generate_gait(ScenarioKind kind, double speed_mps, std::mt19937_64& rng) {
  if (speed_mps < 0.0 || speed_mps > kMaxSpeed) {
    throw std::invalid_argument(fmt::format("generate_gait: speed {} outside [0, 2.5]", speed_mps));
  }
  MotionProfile p = empty_profile();
  p.phase0 = uniform(rng, 0, 2 * kPi);
  std::fill(p.speed.begin(), p.speed.end(), speed_mps);
  if (kind == ScenarioKind::kBendDownOnRoad) std::fill(p.bend.begin(), p.bend.end(), 1.0);
  if (kind == ScenarioKind::kWaveThenCross) std::fill(p.wave.begin(), p.wave.end(), 1.0);
  integrate(p, std::vector<double>(kGaitFrames, 0.0), Point2{0, 0});
  return render_gait(p, SkeletonSpec::default13(), rng);
}

namespace {

std::vector<Polyline> build_roadgraph(double center_x) {
  std::vector<Polyline> lines;
  const double x0 = std::round(center_x) - 30.0;
  for (double y : {-kRoadHalfWidth, 0.0, kRoadHalfWidth}) {
    std::vector<Point2> pts;
    for (int i = 0; i <= 10; ++i) pts.push_back({x0 + 6.0 * i, y});
    lines.push_back(make_polyline(PolylineKind::kLaneBoundary, pts));
  }
  for (double x : {-kCrosswalkHalfWidth, kCrosswalkHalfWidth}) {
    std::vector<Point2> pts;
    for (int i = 0; i <= 4; ++i) pts.push_back({x, -kRoadHalfWidth + 1.75 * i});
    lines.push_back(make_polyline(PolylineKind::kCrosswalkEdge, pts));
  }
  return lines;
}

std::vector<Polyline> build_vehicles(double center_x, std::mt19937_64& rng) {
  std::vector<Polyline> agents;
  const int count = std::uniform_int_distribution<int>(0, 4)(rng);
  for (int k = 0; k < count; ++k) {
    const bool southbound_lane = coin(rng);
    const double y = southbound_lane ? -kRoadHalfWidth / 2 : kRoadHalfWidth / 2;
    const double dir = southbound_lane ? 1.0 : -1.0;
    const double v = uniform(rng, 4.0, 12.0);
    const double x_now = center_x + uniform(rng, -30.0, 30.0);
    std::vector<Point2> pts;
    std::vector<double> offsets;
    for (std::size_t f = 1; f < kHistoryFrames; f += 2) {
      const double t = time_of(f);
      pts.push_back({x_now + dir * v * t, y + std::normal_distribution<double>(0, 0.05)(rng)});
      offsets.push_back(t);
    }
    agents.push_back(make_polyline(PolylineKind::kAgentTrack, pts, offsets));
  }
  return agents;
}

void quantize_points(std::vector<Point2>& pts) {
  for (auto& p : pts) p = {quantize(p[0]), quantize(p[1])};
}

KeypointsSequence quantize_sequence(const KeypointsSequence& seq) {
  std::vector<double> coords(seq.coords().begin(), seq.coords().end());
  std::vector<double> vis(seq.visibilities().begin(), seq.visibilities().end());
  for (double& v : coords) v = quantize(v);
  for (double& v : vis) v = quantize(v);
  return KeypointsSequence(seq.frames(), seq.joints(), std::move(coords), std::move(vis));
}

void quantize_polylines(std::vector<Polyline>& lines) {
  for (auto& line : lines) {
    for (auto& v : line.vectors) {
      v.start = {quantize(v.start[0]), quantize(v.start[1])};
      v.end = {quantize(v.end[0]), quantize(v.end[1])};
      for (double& a : v.attribute) a = quantize(a);
    }
  }
}

}  // namespace

Scene generate_scene(ScenarioKind kind, std::mt19937_64& rng) {
  const SkeletonSpec spec = SkeletonSpec::default13();
  MotionProfile profile = plan_motion(kind, rng);
  if (coin(rng)) rotate_half_turn(profile);
  const KeypointsSequence gait = render_gait(profile, spec, rng);

  Scene scene;
  scene.kind = kind;
  scene.crossing_label = is_crossing(kind) ? 1 : 0;
  KeypointsSequence hist(kHistoryFrames, spec.joint_count());
  KeypointsSequence fut(kFutureFrames, spec.joint_count());
  for (std::size_t f = 0; f < kHistoryFrames; ++f) {
    scene.target_history.push_back(profile.pelvis[f]);
    for (std::size_t j = 0; j < spec.joint_count(); ++j) {
      hist.set_position(f, j, gait.position(f, j));
      hist.set_visibility(f, j, gait.visibility(f, j));
    }
  }
  for (std::size_t k = 0; k < kFutureFrames; ++k) {
    const std::size_t f = kCurrentFrame + kFutureStride * (k + 1);
    scene.target_future.push_back(profile.pelvis[f]);
    for (std::size_t j = 0; j < spec.joint_count(); ++j) {
      fut.set_position(k, j, gait.position(f, j));
      fut.set_visibility(k, j, gait.visibility(f, j));
    }
  }
  scene.keypoints_history = quantize_sequence(hist);
  scene.keypoints_future = quantize_sequence(fut);
  quantize_points(scene.target_history);
  quantize_points(scene.target_future);

  const double center_x = scene.target_history.back()[0];
  scene.roadgraph = build_roadgraph(center_x);
  scene.context_agents = build_vehicles(center_x, rng);
  quantize_polylines(scene.roadgraph);
  quantize_polylines(scene.context_agents);
  scene.heading = quantize(estimate_heading(scene.target_history, spec, scene.keypoints_history));
  return scene;
}

KindMix KindMix::uniform() {
  KindMix m;
  m.weights.fill(1.0 / 6.0);
  return m;
}

KindMix KindMix::paper_balance() {
  // 588,060 positives out of 2,039,520 examples, split evenly over kinds.
  const double pos = 588060.0 / 2039520.0;
  KindMix m;
  for (std::size_t i = 0; i < kAllScenarioKinds.size(); ++i) {
    m.weights[i] = is_crossing(kAllScenarioKinds[i]) ? pos / 3.0 : (1.0 - pos) / 3.0;
  }
  return m;
}

KindMix KindMix::single(ScenarioKind kind) {
  KindMix m;
  m.weights[static_cast<std::size_t>(kind)] = 1.0;
  return m;
}

double KindMix::positive_fraction() const {
  double p = 0.0;
  for (std::size_t i = 0; i < kAllScenarioKinds.size(); ++i) {
    if (is_crossing(kAllScenarioKinds[i])) p += weights[i];
  }
  return p;
}

KindMix parse_mix(const std::string& text) {
  if (text == "uniform") return KindMix::uniform();
  if (text == "paper") return KindMix::paper_balance();
  KindMix mix;
  std::stringstream ss(text);
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("mix entry without '=': " + item);
    const std::string name = item.substr(0, eq);
    const auto kind = scenario_kind_from_string(name);
    if (!kind) throw std::invalid_argument("unknown scenario kind: " + name);
    double w = 0.0;
    try {
      std::size_t used = 0;
      w = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::invalid_argument("bad weight in mix entry: " + item);
    }
    if (!(w >= 0.0)) throw std::invalid_argument("negative weight in mix entry: " + item);
    mix.weights[static_cast<std::size_t>(*kind)] += w;
    any = true;
  }
  if (!any) throw std::invalid_argument("empty mix");
  const double total = std::accumulate(mix.weights.begin(), mix.weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(fmt::format("mix weights sum to {}, expected 1", total));
  }
  return mix;
}

std::array<std::size_t, 6> apportion(std::size_t n, const KindMix& mix) {
  std::array<std::size_t, 6> counts{};
  std::array<double, 6> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    const double exact = mix.weights[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 6> order{0, 1, 2, 3, 4, 5};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 6]];
  return counts;
}

std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Scene> generate_scenes(std::size_t n, const KindMix& mix, std::uint64_t seed) {
  const auto counts = apportion(n, mix);
  std::vector<ScenarioKind> kinds;
  for (std::size_t i = 0; i < 6; ++i) kinds.insert(kinds.end(), counts[i], kAllScenarioKinds[i]);
  std::mt19937_64 order_rng(scene_seed(seed, ~0ULL));
  std::shuffle(kinds.begin(), kinds.end(), order_rng);
  std::vector<Scene> scenes;
  scenes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(scene_seed(seed, i));
    scenes.push_back(generate_scene(kinds[i], rng));
  }
  return scenes;
}

}  // namespace kpx::scenario
