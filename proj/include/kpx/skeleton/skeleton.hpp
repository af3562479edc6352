#ifndef KPX_SKELETON_SKELETON_HPP_
#define KPX_SKELETON_SKELETON_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kpx::skeleton {

using Vec3 = std::array<double, 3>;
using Permutation = std::vector<int>;

/// Bone graph of a human skeleton. Construction validates that every edge
/// endpoint is a joint, there are no self-loops, the graph is connected and
/// at least one center joint is given.
class SkeletonSpec {
 public:
  SkeletonSpec(std::vector<std::string> joint_names, std::vector<std::pair<int, int>> edges,
               std::vector<int> center_joints);

  /// 13 joints: nose, shoulders, elbows, wrists, hips, knees, ankles. Center is
  /// the hip midpoint.
  static SkeletonSpec default13();

  std::size_t joint_count() const { return joint_names_.size(); }
  const std::vector<std::string>& joint_names() const { return joint_names_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<int>& center_joints() const { return center_joints_; }
  int joint_index(const std::string& name) const;
  std::vector<std::vector<int>> neighbors() const;

  bool operator==(const SkeletonSpec&) const = default;

 private:
  std::vector<std::string> joint_names_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> center_joints_;
};

/// T frames of P joints with 3D positions (meters) and visibility scores.
class KeypointsSequence {
 public:
  KeypointsSequence() = default;
  KeypointsSequence(std::size_t frames, std::size_t joints);
  KeypointsSequence(std::size_t frames, std::size_t joints, std::vector<double> coords,
                    std::vector<double> visibility);

  std::size_t frames() const { return frames_; }
  std::size_t joints() const { return joints_; }

  Vec3 position(std::size_t t, std::size_t p) const;
  void set_position(std::size_t t, std::size_t p, const Vec3& v);
  double visibility(std::size_t t, std::size_t p) const { return visibility_[t * joints_ + p]; }
  void set_visibility(std::size_t t, std::size_t p, double v) { visibility_[t * joints_ + p] = v; }

  std::span<const double> coords() const { return coords_; }
  std::span<const double> visibilities() const { return visibility_; }

  /// Throws std::invalid_argument on non-finite coordinates or visibility
  /// outside [0, 1].
  void validate() const;

  bool operator==(const KeypointsSequence&) const = default;

 private:
  std::size_t frames_ = 0;
  std::size_t joints_ = 0;
  std::vector<double> coords_;      // T x P x 3
  std::vector<double> visibility_;  // T x P
};

/// Mean of the center joints at frame t.
Vec3 skeleton_center(const SkeletonSpec& spec, const KeypointsSequence& seq, std::size_t t);
/// Per-joint mean position over all frames.
std::vector<Vec3> mean_pose(const KeypointsSequence& seq);

/// Row-major P x P matrices for the three neighbourhood partitions.
struct PartitionedAdjacency {
  std::size_t joints = 0;
  std::vector<double> root;
  std::vector<double> centripetal;
  std::vector<double> centrifugal;
};

/// Unnormalised 0/1 partition masks, same layout as PartitionedAdjacency.
PartitionedAdjacency partition_masks(const SkeletonSpec& spec, std::span<const Vec3> reference_pose);

/// Splits each joint's neighbourhood into itself (root), neighbours closer to
/// the gravity center than the joint (centripetal, ties included) and the rest
/// (centrifugal). Each matrix is row-normalised by its own row degree.
PartitionedAdjacency build_partitioned_adjacency(const SkeletonSpec& spec,
                                                 std::span<const Vec3> reference_pose);

/// Splits the sequence into `segments` equal chunks and reorders the
/// center-relative joint offsets (and visibility) so output segment i carries
/// input segment perm[i]. Per-frame skeleton centers stay in place.
KeypointsSequence shuffle_segments(const SkeletonSpec& spec, const KeypointsSequence& seq,
                                   int segments, const Permutation& perm);

bool is_permutation_of(const Permutation& perm, int n);
Permutation inverse_permutation(const Permutation& perm);
std::uint64_t factorial(int n);
/// Lexicographic rank of `perm` among all permutations of `n` elements.
std::uint64_t perm_to_label(const Permutation& perm, int n);
Permutation label_to_perm(std::uint64_t label, int n);

}  // namespace kpx::skeleton

#endif  // KPX_SKELETON_SKELETON_HPP_
