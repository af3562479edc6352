#ifndef KPX_AUTODIFF_VALUE_HPP_
#define KPX_AUTODIFF_VALUE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kpx::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Thrown when operand shapes do not conform. The message names the op and
/// both shapes, e.g. "matmul: [3,4] vs [5,2]".
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& lhs, const Shape& rhs);
  ShapeError(const std::string& op, const Shape& shape, const std::string& detail);
};

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  // Accumulates this node's grad into the grads of `inputs`.
  std::function<void(Node&)> backward;
  const char* op = "leaf";
  bool requires_grad = false;
};

/// Handle to a dense row-major array of doubles, optionally participating in
/// reverse-mode differentiation. Copies share the underlying node.
class Value {
 public:
  Value() = default;
  explicit Value(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Value constant(Shape shape, std::vector<double> data);
  static Value parameter(Shape shape, std::vector<double> data);
  static Value scalar(double v);
  static Value zeros(Shape shape);
  static Value full(Shape shape, double v);
  static Value matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Value vector(std::initializer_list<double> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  std::span<const double> data() const { return node_->data; }
  // Direct write access; only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// A seed for backward: upstream gradient injected at an arbitrary node.
struct Seed {
  Value value;
  std::vector<double> grad;
};

/// Ordered record of the operations executed on this thread while the graph is
/// alive. Construction makes it the active graph; destruction restores the
/// previously active one, so graphs must be destroyed in LIFO order.
class Graph {
 public:
  struct Deferred {};

  Graph();
  /// Inactive until a Graph::Scope is opened on it. Such graphs may outlive
  /// others and be destroyed in any order.
  explicit Graph(Deferred);
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Back-propagates from a scalar. Throws std::invalid_argument otherwise.
  void backward(const Value& loss);
  /// Back-propagates several upstream gradients at once.
  void backward(std::span<const Seed> seeds);

  std::size_t size() const { return tape_.size(); }
  void record(const std::shared_ptr<Node>& node) { tape_.push_back(node); }

  static Graph* active();

  /// Makes a deferred graph the active one on this thread for its lifetime.
  class Scope {
   public:
    explicit Scope(Graph& graph);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph* previous_;
  };

 private:
  std::vector<std::shared_ptr<Node>> tape_;
  Graph* previous_ = nullptr;
  bool owns_activation_ = true;
};

namespace detail {

// Fingerprint of the branch taken by every non-smooth op (relu, max, clamp,
// huber). Used by gradient_check to skip coordinates that straddle a kink.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;
  std::uint64_t digest() const { return digest_; }
  void mix(std::uint64_t v) { digest_ = (digest_ ^ v) * 0x100000001b3ULL; }

  static BranchTrace* active();

 private:
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  BranchTrace* previous_ = nullptr;
};

}  // namespace detail

}  // namespace kpx::ad

#endif  // KPX_AUTODIFF_VALUE_HPP_
