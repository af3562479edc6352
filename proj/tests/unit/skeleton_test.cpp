#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "kpx/skeleton/skeleton.hpp"

namespace kpx::skeleton {
namespace {

KeypointsSequence random_sequence(std::size_t frames, std::size_t joints, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-3.0, 3.0);
  std::uniform_real_distribution<double> vis(0.0, 1.0);
  KeypointsSequence seq(frames, joints);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t p = 0; p < joints; ++p) {
      seq.set_position(t, p, {pos(rng), pos(rng), pos(rng)});
      seq.set_visibility(t, p, vis(rng));
    }
  }
  return seq;
}

Vec3 offset(const SkeletonSpec& spec, const KeypointsSequence& seq, std::size_t t, std::size_t p) {
  const Vec3 c = skeleton_center(spec, seq, t);
  const Vec3 v = seq.position(t, p);
  return {v[0] - c[0], v[1] - c[1], v[2] - c[2]};
}

TEST(SkeletonSpecTest, DefaultIsValid) {
  const SkeletonSpec spec = SkeletonSpec::default13();
  EXPECT_EQ(spec.joint_count(), 13u);
  EXPECT_EQ(spec.center_joints(), (std::vector<int>{7, 8}));
  EXPECT_EQ(spec.joint_index("right_ankle"), 12);
}

TEST(SkeletonSpecTest, RejectsInvalidGraphs) {
  EXPECT_THROW(SkeletonSpec({"a", "b"}, {{0, 2}}, {0}), std::invalid_argument);
  EXPECT_THROW(SkeletonSpec({"a", "b"}, {{0, 0}, {0, 1}}, {0}), std::invalid_argument);
  EXPECT_THROW(SkeletonSpec({"a", "b", "c"}, {{0, 1}}, {0}), std::invalid_argument);
  EXPECT_THROW(SkeletonSpec({"a", "b"}, {{0, 1}}, {}), std::invalid_argument);
}

TEST(PartitionTest, SingleJointIsRootOnly) {
  const SkeletonSpec spec({"only"}, {}, {0});
  const std::vector<Vec3> pose{{0.3, 0.1, 1.0}};
  const auto adj = build_partitioned_adjacency(spec, pose);
  EXPECT_EQ(adj.root, (std::vector<double>{1.0}));
  EXPECT_EQ(adj.centripetal, (std::vector<double>{0.0}));
  EXPECT_EQ(adj.centrifugal, (std::vector<double>{0.0}));
}

TEST(PartitionTest, ThreeJointChain) {
  const SkeletonSpec spec({"a", "b", "c"}, {{0, 1}, {1, 2}}, {1});
  const std::vector<Vec3> pose{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  const auto adj = build_partitioned_adjacency(spec, pose);
  // A: B is closer to g=(1,0,0) than A.
  EXPECT_EQ(adj.centripetal[0 * 3 + 1], 1.0);
  EXPECT_EQ(adj.centrifugal[0 * 3 + 1], 0.0);
  // B sits on g: both neighbours are farther -> centrifugal, split evenly.
  EXPECT_EQ(adj.centrifugal[1 * 3 + 0], 0.5);
  EXPECT_EQ(adj.centrifugal[1 * 3 + 2], 0.5);
  EXPECT_EQ(adj.centripetal[2 * 3 + 1], 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(adj.root[i * 3 + i], 1.0);
}

TEST(PartitionTest, EquidistantNeighboursGoCentripetal) {
  // Square around the origin: every joint is 1 from g.
  const SkeletonSpec spec({"a", "b", "c", "d"}, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}, {0});
  const std::vector<Vec3> pose{{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}};
  const auto masks = partition_masks(spec, pose);
  for (double v : masks.centrifugal) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(std::accumulate(masks.centripetal.begin(), masks.centripetal.end(), 0.0), 8.0);
}

TEST(PartitionTest, MasksSumToAdjacencyPlusIdentityAndRowsNormalise) {
  const SkeletonSpec spec = SkeletonSpec::default13();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto seq = random_sequence(5, 13, rng);
    const auto pose = mean_pose(seq);
    const auto masks = partition_masks(spec, pose);
    const auto adj = build_partitioned_adjacency(spec, pose);
    const std::size_t n = 13;
    std::vector<double> expected(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) expected[i * n + i] = 1.0;
    for (const auto& [a, b] : spec.edges()) {
      expected[a * n + b] = 1.0;
      expected[b * n + a] = 1.0;
    }
    for (std::size_t k = 0; k < n * n; ++k) {
      EXPECT_EQ(masks.root[k] + masks.centripetal[k] + masks.centrifugal[k], expected[k]);
    }
    for (const auto* m : {&adj.root, &adj.centripetal, &adj.centrifugal}) {
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          row += (*m)[i * n + j];
          if ((*m)[i * n + j] != 0.0) {
            EXPECT_EQ(expected[i * n + j], 1.0);
          }
        }
        if (row != 0.0) {
          EXPECT_NEAR(row, 1.0, 1e-15);
        }
      }
    }
  }
}

TEST(ShuffleTest, IdentityIsExact) {
  const SkeletonSpec spec = SkeletonSpec::default13();
  std::mt19937_64 rng(1);
  const auto seq = random_sequence(20, 13, rng);
  EXPECT_EQ(shuffle_segments(spec, seq, 4, {0, 1, 2, 3}), seq);
}

TEST(ShuffleTest, SegmentIndexArithmetic) {
  const SkeletonSpec spec = SkeletonSpec::default13();
  std::mt19937_64 rng(2);
  const auto seq = random_sequence(20, 13, rng);
  const auto out = shuffle_segments(spec, seq, 4, {2, 0, 3, 1});
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t p = 0; p < 13; ++p) {
      const Vec3 a = offset(spec, out, t, p);
      const Vec3 b = offset(spec, seq, 10 + t, p);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
      EXPECT_EQ(out.visibility(t, p), seq.visibility(10 + t, p));
    }
  }
}

TEST(ShuffleTest, CentersFixedAndInverseRoundTrips) {
  const SkeletonSpec spec = SkeletonSpec::default13();
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto seq = random_sequence(20, 13, rng);
    Permutation perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto out = shuffle_segments(spec, seq, 4, perm);
    for (std::size_t t = 0; t < 20; ++t) {
      const Vec3 a = skeleton_center(spec, out, t);
      const Vec3 b = skeleton_center(spec, seq, t);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
    }
    const auto back = shuffle_segments(spec, out, 4, inverse_permutation(perm));
    for (std::size_t i = 0; i < seq.coords().size(); ++i) {
      EXPECT_NEAR(back.coords()[i], seq.coords()[i], 1e-12);
    }
    EXPECT_TRUE(std::equal(back.visibilities().begin(), back.visibilities().end(),
                           seq.visibilities().begin()));
  }
}

TEST(ShuffleTest, Errors) {
  const SkeletonSpec spec = SkeletonSpec::default13();
  const KeypointsSequence seq(20, 13);
  EXPECT_THROW(shuffle_segments(spec, seq, 3, {0, 1, 2}), std::invalid_argument);
  EXPECT_THROW(shuffle_segments(spec, seq, 4, {0, 1, 1, 3}), std::invalid_argument);
  EXPECT_THROW(shuffle_segments(spec, seq, 4, {0, 1, 2}), std::invalid_argument);
}

TEST(PermutationLabelTest, FourSegmentsGive24Labels) {
  EXPECT_EQ(factorial(4), 24u);
  EXPECT_EQ(perm_to_label({0, 1, 2, 3}, 4), 0u);
  EXPECT_EQ(perm_to_label({3, 2, 1, 0}, 4), 23u);
}

TEST(PermutationLabelTest, ExhaustiveBijectionUpToFive) {
  for (int n = 1; n <= 5; ++n) {
    Permutation perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::uint64_t expected = 0;
    std::set<std::uint64_t> labels;
    do {
      const std::uint64_t label = perm_to_label(perm, n);
      EXPECT_EQ(label, expected) << "lexicographic order, n=" << n;
      EXPECT_EQ(label_to_perm(label, n), perm);
      labels.insert(label);
      ++expected;
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(labels.size(), factorial(n));
  }
  EXPECT_THROW(label_to_perm(24, 4), std::out_of_range);
  EXPECT_THROW(perm_to_label({0, 0, 1, 2}, 4), std::invalid_argument);
}

TEST(KeypointsSequenceTest, ValidateRejectsBadValues) {
  KeypointsSequence seq(2, 2);
  seq.validate();
  seq.set_visibility(0, 0, 1.5);
  EXPECT_THROW(seq.validate(), std::invalid_argument);
  seq.set_visibility(0, 0, 1.0);
  seq.set_position(1, 1, {NAN, 0, 0});
  EXPECT_THROW(seq.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace kpx::skeleton
