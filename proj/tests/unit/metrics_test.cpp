#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "kpx/metrics/metrics.hpp"

namespace kpx::metrics {
namespace {

// O(n^2) average precision: one pass over the data per distinct threshold.
double brute_force_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  double positives = 0;
  for (int l : labels) positives += l;
  double ap = 0.0, prev = 0.0;
  for (double t : thresholds) {
    double tp = 0, predicted = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++predicted;
        tp += labels[i];
      }
    }
    const double recall = tp / positives;
    ap += (recall - prev) * (tp / predicted);
    prev = recall;
  }
  return ap;
}

double brute_force_ade(const Trajectory& h, const Trajectory& gt) {
  double s = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) s += std::hypot(h[t][0] - gt[t][0], h[t][1] - gt[t][1]);
  return s / static_cast<double>(gt.size());
}

Trajectory random_trajectory(std::mt19937_64& rng, std::size_t n = 8) {
  std::normal_distribution<double> g(0.0, 2.0);
  Trajectory t;
  for (std::size_t i = 0; i < n; ++i) t.push_back({g(rng), g(rng)});
  return t;
}

TEST(Classification, PerfectScores) {
  const std::vector<double> s{1, 0, 1, 1, 0};
  const std::vector<int> l{1, 0, 1, 1, 0};
  const auto m = classification_metrics(s, l);
  EXPECT_EQ(m.acc, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.auc_pr, 1.0);
  EXPECT_FALSE(m.auc_pr_degenerate);
}

TEST(Classification, HandCountedExample) {
  const std::vector<double> s{0.9, 0.8, 0.3};
  const std::vector<int> l{1, 0, 1};
  const auto m = classification_metrics(s, l);
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 0.5);
  EXPECT_DOUBLE_EQ(m.acc, 1.0 / 3.0);
  EXPECT_EQ(m.counts.tp, 1u);
  EXPECT_EQ(m.counts.fp, 1u);
  EXPECT_EQ(m.counts.fn, 1u);
  EXPECT_EQ(m.counts.tn, 0u);
  // Thresholds 0.9, 0.8, 0.3: recall steps 1/2 at precision 1, 0, 1/2 at 2/3.
  EXPECT_NEAR(m.auc_pr, 0.5 + 0.5 * 2.0 / 3.0, 1e-15);
}

TEST(Classification, DegenerateLabelsAreFlagged) {
  const std::vector<double> s{0.2, 0.7};
  auto m = classification_metrics(s, std::vector<int>{1, 1});
  EXPECT_TRUE(m.auc_pr_degenerate);
  EXPECT_EQ(m.auc_pr, 1.0);
  m = classification_metrics(s, std::vector<int>{0, 0});
  EXPECT_TRUE(m.auc_pr_degenerate);
  EXPECT_EQ(m.auc_pr, 0.0);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.f1, 0.0);
}

TEST(Classification, RejectsBadInput) {
  EXPECT_THROW(classification_metrics(std::vector<double>{}, std::vector<int>{}), std::invalid_argument);
  EXPECT_THROW(classification_metrics(std::vector<double>{0.5}, std::vector<int>{1, 0}), std::invalid_argument);
  EXPECT_THROW(classification_metrics(std::vector<double>{0.5}, std::vector<int>{2}), std::invalid_argument);
  EXPECT_THROW(classification_metrics(std::vector<double>{1.5}, std::vector<int>{1}), std::invalid_argument);
  EXPECT_THROW(classification_metrics(std::vector<double>{NAN}, std::vector<int>{1}), std::invalid_argument);
}

TEST(Classification, RandomCasesMatchOracles) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(50);
    std::vector<int> l(50);
    const bool ties = trial % 2 == 0;
    for (std::size_t i = 0; i < 50; ++i) {
      s[i] = ties ? std::round(u(rng) * 10.0) / 10.0 : u(rng);
      l[i] = u(rng) < 0.4 ? 1 : 0;
    }
    l[0] = 1;
    l[1] = 0;
    const auto m = classification_metrics(s, l);
    EXPECT_NEAR(m.auc_pr, brute_force_ap(s, l), 1e-12);
    ConfusionCounts c;
    for (std::size_t i = 0; i < 50; ++i) {
      (s[i] >= 0.5 ? (l[i] ? c.tp : c.fp) : (l[i] ? c.fn : c.tn))++;
    }
    EXPECT_EQ(m.counts.tp, c.tp);
    EXPECT_EQ(m.counts.fp, c.fp);
    EXPECT_EQ(m.counts.tn, c.tn);
    EXPECT_EQ(m.counts.fn, c.fn);
    EXPECT_EQ(m.acc, static_cast<double>(c.tp + c.tn) / 50.0);
  }
}

TEST(Displacement, ExactHypothesisGivesZero) {
  std::mt19937_64 rng(1);
  const auto gt = random_trajectory(rng);
  EXPECT_EQ(min_ade({gt}, gt), 0.0);
  EXPECT_EQ(min_fde({gt}, gt), 0.0);
}

TEST(Displacement, HandComputedFde) {
  auto ending = [](double x, double y) {
    Trajectory t(8, Point2{0, 0});
    t.back() = {x, y};
    return t;
  };
  EXPECT_DOUBLE_EQ(min_fde({ending(3, 0), ending(4, 1), ending(0, 0)}, ending(4, 0)), 1.0);
}

TEST(Displacement, RandomCasesMatchOracleAndBounds) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto gt = random_trajectory(rng);
    std::vector<Trajectory> hyps;
    const std::size_t k = 1 + rng() % 6;
    for (std::size_t i = 0; i < k; ++i) hyps.push_back(random_trajectory(rng));
    double ade = INFINITY, fde = INFINITY;
    for (const auto& h : hyps) {
      ade = std::min(ade, brute_force_ade(h, gt));
      fde = std::min(fde, std::hypot(h.back()[0] - gt.back()[0], h.back()[1] - gt.back()[1]));
      EXPECT_LE(min_ade(hyps, gt), brute_force_ade(h, gt));
    }
    EXPECT_EQ(min_ade(hyps, gt), ade);
    EXPECT_EQ(min_fde(hyps, gt), fde);

    auto more = hyps;
    more.push_back(random_trajectory(rng));
    EXPECT_LE(min_ade(more, gt), min_ade(hyps, gt));
    EXPECT_LE(min_fde(more, gt), min_fde(hyps, gt));

    const double th = static_cast<double>(trial) * 0.37, tx = 5.0 - trial, ty = 0.5 * trial;
    auto move = [&](Trajectory t) {
      for (auto& p : t) p = {std::cos(th) * p[0] - std::sin(th) * p[1] + tx, std::sin(th) * p[0] + std::cos(th) * p[1] + ty};
      return t;
    };
    std::vector<Trajectory> moved;
    for (const auto& h : hyps) moved.push_back(move(h));
    EXPECT_NEAR(min_ade(moved, move(gt)), ade, 1e-10);
    EXPECT_NEAR(min_fde(moved, move(gt)), fde, 1e-10);
  }
}

TEST(Displacement, ErrorsOnBadHorizon) {
  std::mt19937_64 rng(2);
  const auto gt = random_trajectory(rng);
  EXPECT_THROW(min_ade({random_trajectory(rng, 7)}, gt), std::invalid_argument);
  EXPECT_THROW(min_fde({}, gt), std::invalid_argument);
  EXPECT_THROW(min_ade({gt}, gt, 9), std::invalid_argument);
}

TEST(Baseline, ConstantVelocityExtrapolation) {
  Trajectory history;
  for (int i = 0; i < 20; ++i) history.push_back({0.1 * i, 2.0});  // 1 m/s at 10 Hz
  history[10] = {50.0, 50.0};  // outside the 5-frame window
  const auto f = constant_velocity(history, 10.0, 8, 2.0);
  ASSERT_EQ(f.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(f[i][0], 1.9 + 0.5 * static_cast<double>(i + 1), 1e-12);
    EXPECT_NEAR(f[i][1], 2.0, 1e-12);
  }
  EXPECT_THROW(constant_velocity(Trajectory(3), 10.0, 8, 2.0), std::invalid_argument);
}

TEST(Report, HorizonsAndExports) {
  std::mt19937_64 rng(3);
  std::vector<ExampleOutcome> outcomes;
  for (int i = 0; i < 10; ++i) {
    const auto gt = random_trajectory(rng);
    outcomes.push_back({0.1 * i, i % 2, {random_trajectory(rng), gt}, gt});
  }
  const auto r = build_report(outcomes, 6, 2.0);
  ASSERT_EQ(r.horizons.size(), 4u);
  EXPECT_EQ(r.horizons.back().seconds, 4.0);
  EXPECT_EQ(r.min_ade_k(), 0.0);
  EXPECT_EQ(r.n_examples, 10u);
  const auto& c = r.classification.counts;
  EXPECT_EQ(c.tp + c.fp + c.tn + c.fn, 10u);

  const auto j = to_json(r);
  EXPECT_EQ(j.at("n_examples"), 10);
  EXPECT_EQ(j.at("horizons").size(), 4u);
  const std::string header = csv_header(r), row = csv_row(r);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_NE(header.find("min_ade_4s"), std::string::npos);
}

}  // namespace
}  // namespace kpx::metrics
