#include "kpx/skeleton/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

#include <fmt/format.h>

namespace kpx::skeleton {

namespace {

constexpr double kTieTolerance = 1e-9;

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void normalize_rows(std::vector<double>& m, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += m[i * n + j];
    if (deg == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) m[i * n + j] /= deg;
  }
}

}  // namespace

SkeletonSpec::SkeletonSpec(std::vector<std::string> joint_names,
                           std::vector<std::pair<int, int>> edges, std::vector<int> center_joints)
    : joint_names_(std::move(joint_names)),
      edges_(std::move(edges)),
      center_joints_(std::move(center_joints)) {
  const int p = static_cast<int>(joint_names_.size());
  if (p == 0) throw std::invalid_argument("SkeletonSpec: no joints");
  for (const auto& [a, b] : edges_) {
    if (a < 0 || a >= p || b < 0 || b >= p) {
      throw std::invalid_argument(fmt::format("SkeletonSpec: edge ({}, {}) out of range", a, b));
    }
    if (a == b) throw std::invalid_argument(fmt::format("SkeletonSpec: self-loop at {}", a));
  }
  if (center_joints_.empty()) throw std::invalid_argument("SkeletonSpec: no center joints");
  for (int c : center_joints_) {
    if (c < 0 || c >= p) throw std::invalid_argument("SkeletonSpec: center joint out of range");
  }
  const auto adj = neighbors();
  std::vector<bool> seen(p, false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  int reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        frontier.push(v);
      }
    }
  }
  if (reached != p) throw std::invalid_argument("SkeletonSpec: bone graph is disconnected");
}

SkeletonSpec SkeletonSpec::default13() {
  std::vector<std::string> names{"nose",       "left_shoulder", "right_shoulder", "left_elbow",
                                 "right_elbow", "left_wrist",    "right_wrist",    "left_hip",
                                 "right_hip",  "left_knee",     "right_knee",     "left_ankle",
                                 "right_ankle"};
  std::vector<std::pair<int, int>> edges{{0, 1},  {0, 2}, {1, 2},  {1, 3},  {3, 5},
                                         {2, 4},  {4, 6}, {1, 7},  {2, 8},  {7, 8},
                                         {7, 9},  {9, 11}, {8, 10}, {10, 12}};
  return SkeletonSpec(std::move(names), std::move(edges), {7, 8});
}

int SkeletonSpec::joint_index(const std::string& name) const {
  auto it = std::find(joint_names_.begin(), joint_names_.end(), name);
  if (it == joint_names_.end()) throw std::out_of_range("SkeletonSpec: unknown joint " + name);
  return static_cast<int>(it - joint_names_.begin());
}

std::vector<std::vector<int>> SkeletonSpec::neighbors() const {
  std::vector<std::vector<int>> adj(joint_names_.size());
  for (const auto& [a, b] : edges_) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

KeypointsSequence::KeypointsSequence(std::size_t frames, std::size_t joints)
    : frames_(frames),
      joints_(joints),
      coords_(frames * joints * 3, 0.0),
      visibility_(frames * joints, 1.0) {}

KeypointsSequence::KeypointsSequence(std::size_t frames, std::size_t joints,
                                     std::vector<double> coords, std::vector<double> visibility)
    : frames_(frames), joints_(joints), coords_(std::move(coords)), visibility_(std::move(visibility)) {
  if (coords_.size() != frames * joints * 3 || visibility_.size() != frames * joints) {
    throw std::invalid_argument(fmt::format(
        "KeypointsSequence: expected {} coords and {} visibilities, got {} and {}",
        frames * joints * 3, frames * joints, coords_.size(), visibility_.size()));
  }
}

Vec3 KeypointsSequence::position(std::size_t t, std::size_t p) const {
  const std::size_t k = (t * joints_ + p) * 3;
  return {coords_[k], coords_[k + 1], coords_[k + 2]};
}

void KeypointsSequence::set_position(std::size_t t, std::size_t p, const Vec3& v) {
  const std::size_t k = (t * joints_ + p) * 3;
  coords_[k] = v[0];
  coords_[k + 1] = v[1];
  coords_[k + 2] = v[2];
}

void KeypointsSequence::validate() const {
  for (double c : coords_) {
    if (!std::isfinite(c)) throw std::invalid_argument("KeypointsSequence: non-finite coordinate");
  }
  for (double v : visibility_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("KeypointsSequence: visibility outside [0, 1]");
    }
  }
}

Vec3 skeleton_center(const SkeletonSpec& spec, const KeypointsSequence& seq, std::size_t t) {
  Vec3 c{0, 0, 0};
  for (int j : spec.center_joints()) {
    const Vec3 p = seq.position(t, j);
    for (int a = 0; a < 3; ++a) c[a] += p[a];
  }
  const double n = static_cast<double>(spec.center_joints().size());
  for (double& v : c) v /= n;
  return c;
}

std::vector<Vec3> mean_pose(const KeypointsSequence& seq) {
  std::vector<Vec3> pose(seq.joints(), Vec3{0, 0, 0});
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t p = 0; p < seq.joints(); ++p) {
      const Vec3 v = seq.position(t, p);
      for (int a = 0; a < 3; ++a) pose[p][a] += v[a];
    }
  }
  for (auto& v : pose) {
    for (double& c : v) c /= static_cast<double>(seq.frames());
  }
  return pose;
}

PartitionedAdjacency partition_masks(const SkeletonSpec& spec, std::span<const Vec3> reference_pose) {
  const std::size_t n = spec.joint_count();
  if (reference_pose.size() != n) {
    throw std::invalid_argument("partition_masks: reference pose has wrong joint count");
  }
  for (const Vec3& v : reference_pose) {
    for (double c : v) {
      if (!std::isfinite(c)) throw std::invalid_argument("partition_masks: non-finite pose");
    }
  }
  Vec3 g{0, 0, 0};
  for (const Vec3& v : reference_pose) {
    for (int a = 0; a < 3; ++a) g[a] += v[a];
  }
  for (double& c : g) c /= static_cast<double>(n);

  PartitionedAdjacency out;
  out.joints = n;
  out.root.assign(n * n, 0.0);
  out.centripetal.assign(n * n, 0.0);
  out.centrifugal.assign(n * n, 0.0);
  const auto adj = spec.neighbors();
  for (std::size_t i = 0; i < n; ++i) {
    out.root[i * n + i] = 1.0;
    const double di = distance(reference_pose[i], g);
    for (int j : adj[i]) {
      const double dj = distance(reference_pose[j], g);
      if (dj < di || std::abs(dj - di) <= kTieTolerance) {
        out.centripetal[i * n + j] = 1.0;
      } else {
        out.centrifugal[i * n + j] = 1.0;
      }
    }
  }
  return out;
}

PartitionedAdjacency build_partitioned_adjacency(const SkeletonSpec& spec,
                                                 std::span<const Vec3> reference_pose) {
  PartitionedAdjacency out = partition_masks(spec, reference_pose);
  normalize_rows(out.root, out.joints);
  normalize_rows(out.centripetal, out.joints);
  normalize_rows(out.centrifugal, out.joints);
  return out;
}

KeypointsSequence shuffle_segments(const SkeletonSpec& spec, const KeypointsSequence& seq,
                                   int segments, const Permutation& perm) {
  const std::size_t frames = seq.frames();
  if (segments <= 0 || frames % static_cast<std::size_t>(segments) != 0) {
    throw std::invalid_argument(
        fmt::format("shuffle_segments: {} frames not divisible into {} segments", frames, segments));
  }
  if (!is_permutation_of(perm, segments)) {
    throw std::invalid_argument("shuffle_segments: invalid permutation");
  }
  const std::size_t len = frames / segments;
  KeypointsSequence out(frames, seq.joints());
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t seg = t / len;
    const std::size_t src = static_cast<std::size_t>(perm[seg]) * len + t % len;
    if (src == t) {
      for (std::size_t p = 0; p < seq.joints(); ++p) {
        out.set_position(t, p, seq.position(t, p));
        out.set_visibility(t, p, seq.visibility(t, p));
      }
      continue;
    }
    const Vec3 c_out = skeleton_center(spec, seq, t);
    const Vec3 c_src = skeleton_center(spec, seq, src);
    for (std::size_t p = 0; p < seq.joints(); ++p) {
      const Vec3 v = seq.position(src, p);
      out.set_position(t, p, {c_out[0] + (v[0] - c_src[0]), c_out[1] + (v[1] - c_src[1]),
                              c_out[2] + (v[2] - c_src[2])});
      out.set_visibility(t, p, seq.visibility(src, p));
    }
  }
  return out;
}

bool is_permutation_of(const Permutation& perm, int n) {
  if (static_cast<int>(perm.size()) != n) return false;
  std::vector<bool> seen(n, false);
  for (int v : perm) {
    if (v < 0 || v >= n || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

Permutation inverse_permutation(const Permutation& perm) {
  Permutation inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  return inv;
}

std::uint64_t factorial(int n) {
  if (n < 0 || n > 20) throw std::invalid_argument("factorial: argument out of range");
  std::uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

std::uint64_t perm_to_label(const Permutation& perm, int n) {
  if (!is_permutation_of(perm, n)) throw std::invalid_argument("perm_to_label: invalid permutation");
  // Lehmer code: count of smaller unused elements at each position.
  std::uint64_t label = 0;
  std::vector<bool> used(n, false);
  for (int i = 0; i < n; ++i) {
    int smaller = 0;
    for (int v = 0; v < perm[i]; ++v) {
      if (!used[v]) ++smaller;
    }
    used[perm[i]] = true;
    label += static_cast<std::uint64_t>(smaller) * factorial(n - 1 - i);
  }
  return label;
}

Permutation label_to_perm(std::uint64_t label, int n) {
  if (label >= factorial(n)) {
    throw std::out_of_range(fmt::format("label_to_perm: label {} out of range for n={}", label, n));
  }
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  Permutation perm;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t f = factorial(n - 1 - i);
    const std::size_t k = static_cast<std::size_t>(label / f);
    label %= f;
    perm.push_back(pool[k]);
    pool.erase(pool.begin() + static_cast<long>(k));
  }
  return perm;
}

}  // namespace kpx::skeleton
