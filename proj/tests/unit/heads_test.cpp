#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "kpx/autodiff/gradient_check.hpp"
#include "kpx/heads/heads.hpp"
#include "test_util.hpp"

namespace kpx::heads {
namespace {

using ad::ParamBinding;
using ad::ParamStore;
using ad::Value;

ParamStore head_store(std::uint64_t seed) {
  ParamStore store;
  register_heads(store, HeadConfig{}, seed);
  testing::jitter(store, seed + 7);
  return store;
}

Value random_value(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  return Value::constant({n}, testing::random_vector(n, seed, -scale, scale));
}

Trajectory random_trajectory(std::uint64_t seed, double scale = 3.0) {
  const auto v = testing::random_vector(16, seed, -scale, scale);
  Trajectory t;
  for (std::size_t i = 0; i < 8; ++i) t.push_back({v[2 * i], v[2 * i + 1]});
  return t;
}

Value trajectories_value(const std::vector<Trajectory>& ts) {
  std::vector<double> data;
  for (const auto& t : ts) {
    for (const auto& p : t) data.insert(data.end(), {p[0], p[1]});
  }
  return Value::constant({ts.size(), 2 * ts.front().size()}, std::move(data));
}

void expect_gradients_match(const std::function<Value()>& f, ParamBinding& b) {
  b.bind_all();
  auto params = b.bound();
  const auto report = ad::gradient_check(f, params, {.max_coordinates = 96});
  EXPECT_LT(report.max_relative_error, 1e-4);
  EXPECT_GT(report.checked, 0u);
}

TEST(ActionHead, BceAtHalfIsLn2) {
  EXPECT_NEAR(bce(Value::scalar(0.5), 1).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce(Value::scalar(0.5), 0).item(), std::log(2.0), 1e-12);
  ActionOutput out{Value::scalar(0.5), Value::scalar(0.5)};
  EXPECT_NEAR(loss_ar(out, 1).item(), std::log(2.0), 1e-12);
}

TEST(ActionHead, SaturatedProbabilityIsClamped) {
  const double l = bce(Value::scalar(1.0), 1).item();
  EXPECT_NEAR(l, 1e-7, 1e-12);
  EXPECT_TRUE(std::isfinite(bce(Value::scalar(1.0), 0).item()));
  EXPECT_THROW(bce(Value::scalar(0.5), 2), std::invalid_argument);
}

TEST(ActionHead, GradientMatchesFiniteDifferences) {
  ParamStore store = head_store(1);
  ParamBinding b(store);
  const Value complete = random_value(128, 1), kp = random_value(64, 2);
  expect_gradients_match([&] { return loss_ar(action_head(b, complete, kp), 1); }, b);
}

TEST(Candidates, LatticeAtZeroHeading) {
  const auto c = sample_target_candidates(0.0, 15, 6.0);
  EXPECT_EQ(c.size(), 225u);
  auto has = [&](double x, double y) {
    return std::any_of(c.begin(), c.end(), [&](const Point2& p) { return p[0] == x && p[1] == y; });
  };
  EXPECT_TRUE(has(0, 0));
  EXPECT_TRUE(has(6, 6));
  EXPECT_TRUE(has(-6, 6));
  EXPECT_THROW(sample_target_candidates(0.0, 14, 6.0), std::invalid_argument);
}

TEST(Candidates, QuarterTurnMapsXToY) {
  const auto base = sample_target_candidates(0.0, 13, 6.0);
  const auto rot = sample_target_candidates(std::numbers::pi / 2, 13, 6.0);
  const auto it = std::find(base.begin(), base.end(), Point2{1.0, 0.0});
  ASSERT_NE(it, base.end());
  const auto& q = rot[static_cast<std::size_t>(it - base.begin())];
  EXPECT_NEAR(q[0], 0.0, 1e-12);
  EXPECT_NEAR(q[1], 1.0, 1e-12);
}

TEST(Candidates, RotatedSetIsRotationOfBase) {
  const auto base = sample_target_candidates(0.0, 15, 6.0);
  for (double theta : {0.3, -1.2, 2.9}) {
    const auto rot = sample_target_candidates(theta, 15, 6.0);
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_NEAR(rot[i][0], std::cos(theta) * base[i][0] - std::sin(theta) * base[i][1], 1e-12);
      EXPECT_NEAR(rot[i][1], std::sin(theta) * base[i][0] + std::cos(theta) * base[i][1], 1e-12);
    }
  }
}

TEST(TargetHead, UniformLogitsGiveLog225) {
  const auto c = sample_target_candidates(0.0, 15, 6.0);
  const Point2 gt{2.0, -1.3};
  const std::size_t n = nearest_candidate(c, gt);
  std::vector<double> offsets(450, 0.0);
  offsets[2 * n] = gt[0] - c[n][0];
  offsets[2 * n + 1] = gt[1] - c[n][1];
  TargetPrediction pred{Value::zeros({225}), Value::constant({225, 2}, offsets)};
  EXPECT_NEAR(loss_target(pred, c, gt).item(), std::log(225.0), 1e-12);
}

TEST(TargetHead, GtOnLatticeHasZeroResidual) {
  const auto c = sample_target_candidates(0.0, 15, 6.0);
  const Point2 gt = c[37];
  EXPECT_EQ(nearest_candidate(c, gt), 37u);
  TargetPrediction pred{Value::zeros({225}), Value::zeros({225, 2})};
  EXPECT_NEAR(loss_target(pred, c, gt).item(), std::log(225.0), 1e-12);
}

TEST(TargetHead, NearestMatchesBruteForce) {
  const auto c = sample_target_candidates(0.4, 15, 6.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-8, 8);
  for (int trial = 0; trial < 500; ++trial) {
    const Point2 g{u(rng), u(rng)};
    std::vector<double> sq(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) sq[i] = (c[i][0] - g[0]) * (c[i][0] - g[0]) + (c[i][1] - g[1]) * (c[i][1] - g[1]);
    EXPECT_EQ(nearest_candidate(c, g), static_cast<std::size_t>(std::min_element(sq.begin(), sq.end()) - sq.begin()));
  }
}

TEST(TargetHead, ShiftInvariantAndGradientChecked) {
  ParamStore store = head_store(2);
  ParamBinding b(store);
  const auto c = sample_target_candidates(0.0, 15, 6.0);
  const Value complete = random_value(128, 3);
  const Point2 gt{1.7, 0.4};
  auto pred = predict_targets(b, complete, c);
  const double base = loss_target(pred, c, gt).item();
  pred.logits = ad::add_scalar(pred.logits, 123.0);
  EXPECT_NEAR(loss_target(pred, c, gt).item(), base, 1e-10);
  EXPECT_GE(base, 0.0);
  expect_gradients_match([&] { return loss_target(predict_targets(b, complete, c), c, gt); }, b);
}

TEST(TrajectoryHead, ZeroAndUnitResidual) {
  const Trajectory gt = random_trajectory(1);
  EXPECT_EQ(loss_traj(trajectories_value({gt}), gt).item(), 0.0);
  Trajectory shifted = gt;
  for (auto& p : shifted) p[0] += 1.0;
  EXPECT_NEAR(loss_traj(trajectories_value({shifted}), gt).item(), 0.5, 1e-12);
  for (auto& p : shifted) p[1] -= 1.0;
  EXPECT_NEAR(loss_traj(trajectories_value({shifted}), gt).item(), 1.0, 1e-12);
}

TEST(TrajectoryHead, GradientMatchesFiniteDifferences) {
  ParamStore store = head_store(3);
  ParamBinding b(store);
  const Value complete = random_value(128, 4);
  const Trajectory gt = random_trajectory(2, 0.5);
  const Value target = Value::constant({1, 2}, {gt.back()[0], gt.back()[1]});
  const auto out = generate_trajectory(b, complete, target);
  EXPECT_EQ(out.shape(), (ad::Shape{1, 16}));
  expect_gradients_match([&] { return loss_traj(generate_trajectory(b, complete, target), gt); }, b);
}

TEST(ScoreHead, SingletonLossIsZero) {
  const Trajectory gt = random_trajectory(1);
  const Value t = trajectories_value({random_trajectory(2)});
  const auto psi = teacher_distribution(t, gt, 1.0);
  ASSERT_EQ(psi.size(), 1u);
  EXPECT_EQ(psi[0], 1.0);
  EXPECT_EQ(loss_score(Value::constant({1}, {0.7}), psi).item(), 0.0);
}

TEST(ScoreHead, EqualDistancesGiveUniformTeacher) {
  Trajectory gt(8, Point2{0, 0});
  Trajectory a(8, Point2{0, 0}), c(8, Point2{0, 0});
  a.back() = {2, 0};
  c.back() = {0, -2};
  const auto psi = teacher_distribution(trajectories_value({a, c}), gt, 1.0);
  EXPECT_DOUBLE_EQ(psi[0], 0.5);
  EXPECT_DOUBLE_EQ(psi[1], 0.5);
}

TEST(ScoreHead, TeacherMatchesFormula) {
  Trajectory gt;
  for (int t = 0; t < 8; ++t) gt.push_back({0.5 * t, 0.0});
  std::vector<Trajectory> ts(3, gt);
  ts[0][3][1] += 0.3;                    // D = 0.3
  ts[1][7][0] += 1.5;                    // D = 1.5
  for (auto& p : ts[2]) p[1] += 0.8;     // D = 0.8
  const auto psi = teacher_distribution(trajectories_value(ts), gt, 1.0);
  const double z = std::exp(-0.3) + std::exp(-1.5) + std::exp(-0.8);
  EXPECT_NEAR(psi[0], std::exp(-0.3) / z, 1e-12);
  EXPECT_NEAR(psi[1], std::exp(-1.5) / z, 1e-12);
  EXPECT_NEAR(psi[2], std::exp(-0.8) / z, 1e-12);
}

TEST(ScoreHead, LossIsKlDivergence) {
  const std::vector<double> psi{0.2, 0.5, 0.3};
  const Value logits = Value::constant({3}, {0.1, -0.4, 1.2});
  std::vector<double> q{std::exp(0.1), std::exp(-0.4), std::exp(1.2)};
  const double z = q[0] + q[1] + q[2];
  double kl = 0.0;
  for (int i = 0; i < 3; ++i) kl += psi[i] * std::log(psi[i] / (q[i] / z));
  EXPECT_NEAR(loss_score(logits, psi).item(), kl, 1e-12);
  EXPECT_NEAR(loss_score(Value::constant({3}, {std::log(0.2), std::log(0.5), std::log(0.3)}), psi).item(), 0.0, 1e-12);
}

TEST(ScoreHead, ShiftInvariantAndGradientChecked) {
  ParamStore store = head_store(4);
  ParamBinding b(store);
  const Value complete = random_value(128, 5);
  const Trajectory gt = random_trajectory(3);
  std::vector<Trajectory> ts;
  for (int i = 0; i < 10; ++i) ts.push_back(random_trajectory(10 + i));
  const Value tv = trajectories_value(ts);
  const auto psi = teacher_distribution(tv, gt, 1.0);
  const Value logits = score_trajectories(b, complete, tv);
  EXPECT_NEAR(loss_score(ad::add_scalar(logits, -55.0), psi).item(), loss_score(logits, psi).item(), 1e-10);
  expect_gradients_match([&] { return loss_score(score_trajectories(b, complete, tv), psi); }, b);
}

TEST(ScoreHead, DifferentiableTeacherAgreesWithReference) {
  const Trajectory gt = random_trajectory(21);
  std::vector<Trajectory> ts;
  for (int i = 0; i < 12; ++i) ts.push_back(random_trajectory(30 + i));
  const Value tv = trajectories_value(ts);
  const auto psi = teacher_distribution(tv, gt, 1.0);
  const Value log_psi_value = teacher_log_distribution(tv, gt, 1.0);
  const auto log_psi = log_psi_value.data();
  for (std::size_t i = 0; i < psi.size(); ++i) EXPECT_NEAR(std::exp(log_psi[i]), psi[i], 1e-12);
  const Value logits = random_value(12, 8);
  EXPECT_NEAR(loss_score(logits, tv, gt, 1.0).item(), loss_score(logits, psi).item(), 1e-12);
}

TEST(ScoreHead, GradientFlowsThroughGeneratedTrajectories) {
  ParamStore store = head_store(6);
  ParamBinding b(store);
  const Value complete = random_value(128, 9);
  const Trajectory gt = random_trajectory(4);
  const Value goals = Value::constant({5, 2}, testing::random_vector(10, 12, -4.0, 4.0));
  expect_gradients_match(
      [&] {
        const Value tv = generate_trajectory(b, complete, goals);
        return loss_score(score_trajectories(b, complete, tv), tv, gt, 1.0);
      },
      b);
}

Trajectory ending_at(double x, double y) {
  Trajectory t(8, Point2{0, 0});
  t.back() = {x, y};
  return t;
}

TEST(Selection, HandRunExample) {
  const std::vector<Trajectory> ts{ending_at(0, 0), ending_at(0.5, 0), ending_at(3, 0)};
  const auto h = select_trajectories(ts, {0.9, 0.8, 0.7}, 2, 1.0);
  EXPECT_EQ(h.indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_NEAR(h.scores[0], 0.9 / 1.6, 1e-12);
  EXPECT_NEAR(h.scores[1], 0.7 / 1.6, 1e-12);
}

TEST(Selection, IdenticalEndpointsSelectOne) {
  const std::vector<Trajectory> ts(5, ending_at(1, 1));
  const auto h = select_trajectories(ts, {0.1, 0.5, 0.2, 0.1, 0.1}, 6, 1.0);
  EXPECT_EQ(h.indices, (std::vector<std::size_t>{1}));
  EXPECT_EQ(h.scores, (std::vector<double>{1.0}));
}

TEST(Selection, RandomInputsRespectSeparationAndTopK) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 1 + rng() % 40;
    std::vector<Trajectory> ts;
    std::vector<double> scores;
    for (std::size_t i = 0; i < m; ++i) {
      ts.push_back(ending_at(u(rng), u(rng)));
      scores.push_back(u(rng));
    }
    const auto h = select_trajectories(ts, scores, 6, 1.0);
    EXPECT_LE(h.indices.size(), 6u);
    for (std::size_t a = 0; a < h.indices.size(); ++a) {
      for (std::size_t c = a + 1; c < h.indices.size(); ++c) {
        const auto& p = h.trajectories[a].back();
        const auto& q = h.trajectories[c].back();
        EXPECT_GE(std::hypot(p[0] - q[0], p[1] - q[1]), 1.0);
      }
    }
    const auto top = select_trajectories(ts, scores, 6, 0.0);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto c) { return scores[a] > scores[c]; });
    order.resize(std::min<std::size_t>(6, m));
    EXPECT_EQ(top.indices, order);
  }
}

TEST(KjpHead, UniformLogitsGiveLog24) {
  EXPECT_NEAR(loss_kjp(Value::zeros({24}), 5).item(), std::log(24.0), 1e-12);
  std::vector<double> confident(24, 0.0);
  confident[3] = 60.0;
  EXPECT_LT(loss_kjp(Value::constant({24}, confident), 3).item(), 1e-20);
  EXPECT_THROW(loss_kjp(Value::zeros({24}), 24), std::invalid_argument);
}

TEST(KjpHead, ShiftInvariantAndGradientChecked) {
  ParamStore store = head_store(5);
  ParamBinding b(store);
  const Value kp = random_value(64, 6);
  const Value logits = kjp_head(b, kp);
  EXPECT_EQ(logits.size(), 24u);
  EXPECT_NEAR(loss_kjp(ad::add_scalar(logits, 9.0), 17).item(), loss_kjp(logits, 17).item(), 1e-10);
  expect_gradients_match([&] { return loss_kjp(kjp_head(b, kp), 17); }, b);
}

TEST(KpHead, ZeroAndUnitResidual) {
  const auto gt = testing::random_vector(312, 1);
  EXPECT_EQ(loss_kp(Value::constant({312}, gt), gt).item(), 0.0);
  auto plus = gt;
  for (double& v : plus) v += 1.0;
  EXPECT_NEAR(loss_kp(Value::constant({312}, plus), gt).item(), 1.0, 1e-12);
}

TEST(KpHead, GradientMatchesFiniteDifferences) {
  ParamStore store = head_store(6);
  ParamBinding b(store);
  const Value kp = random_value(64, 7);
  const auto gt = testing::random_vector(312, 2);
  EXPECT_EQ(kp_head(b, kp).size(), 312u);
  expect_gradients_match([&] { return loss_kp(kp_head(b, kp), gt); }, b);
}

TEST(KclHead, CosineDefinition) {
  const Value u = random_value(64, 3);
  const Value c = cosine_matrix({u, -u});
  EXPECT_NEAR(c.at({0, 0}), 1.0, 1e-12);
  EXPECT_NEAR(c.at({0, 1}), -1.0, 1e-12);
}

TEST(KclHead, ClosedForms) {
  const Value u = random_value(64, 3), v = random_value(64, 4);
  EXPECT_NEAR(loss_kcl({u, v}, 1.0).item(), 0.0, 1e-12);
  EXPECT_NEAR(loss_kcl({u, u, u, u}, 1.0).item(), std::log(3.0), 1e-12);
}

TEST(KclHead, ZeroNormIsFloored) {
  KclStats stats;
  const double l = loss_kcl({Value::zeros({64}), random_value(64, 1), random_value(64, 2), random_value(64, 3)}, 1.0, &stats).item();
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_EQ(stats.floored_norms, 1u);
}

TEST(KclHead, ScaleInvariantAndGradientChecked) {
  std::vector<Value> zs;
  for (int i = 0; i < 6; ++i) zs.push_back(random_value(64, 20 + i));
  std::vector<Value> scaled;
  for (const auto& z : zs) scaled.push_back(ad::scale(z, 3.7));
  EXPECT_NEAR(loss_kcl(zs, 1.0).item(), loss_kcl(scaled, 1.0).item(), 1e-10);

  ParamStore store = head_store(7);
  ParamBinding b(store);
  std::vector<Value> kps;
  for (int i = 0; i < 4; ++i) kps.push_back(random_value(64, 40 + i));
  expect_gradients_match(
      [&] {
        std::vector<Value> proj;
        for (const auto& k : kps) proj.push_back(kcl_project(b, k));
        return loss_kcl(proj, 1.0);
      },
      b);
}

TEST(KclHead, RejectsOddBatches) {
  EXPECT_THROW(loss_kcl({random_value(64, 1)}, 1.0), std::invalid_argument);
  EXPECT_THROW(loss_kcl({random_value(64, 1), random_value(64, 2)}, 0.0), std::invalid_argument);
}

}  // namespace
}  // namespace kpx::heads
