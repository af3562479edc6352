#include "kpx/autodiff/value.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace kpx::ad {

namespace {

thread_local Graph* g_active_graph = nullptr;
thread_local detail::BranchTrace* g_active_trace = nullptr;

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    throw ShapeError("value", shape, "data length " + std::to_string(data.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), 0.0);
  return node;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

ShapeError::ShapeError(const std::string& op, const Shape& lhs, const Shape& rhs)
    : std::invalid_argument(op + ": shape mismatch " + shape_string(lhs) + " vs " +
                            shape_string(rhs)) {}

ShapeError::ShapeError(const std::string& op, const Shape& shape, const std::string& detail)
    : std::invalid_argument(op + ": invalid shape " + shape_string(shape) + " (" + detail + ")") {}

Value Value::constant(Shape shape, std::vector<double> data) {
  return Value(make_leaf(std::move(shape), std::move(data), false));
}

Value Value::parameter(Shape shape, std::vector<double> data) {
  return Value(make_leaf(std::move(shape), std::move(data), true));
}

Value Value::scalar(double v) { return constant({}, {v}); }

Value Value::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Value Value::full(Shape shape, double v) {
  const std::size_t n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, v));
}

Value Value::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return constant({rows, cols}, std::vector<double>(values));
}

Value Value::vector(std::initializer_list<double> values) {
  return constant({values.size()}, std::vector<double>(values));
}

void Value::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

double Value::item() const {
  if (node_->data.size() != 1) throw ShapeError("item", node_->shape, "expected one element");
  return node_->data[0];
}

double Value::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != node_->shape.size()) throw ShapeError("at", node_->shape, "index rank");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= node_->shape[axis]) throw ShapeError("at", node_->shape, "index out of range");
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

Graph::Graph() : previous_(g_active_graph) { g_active_graph = this; }

Graph::Graph(Deferred) : owns_activation_(false) {}

Graph::~Graph() {
  if (owns_activation_) g_active_graph = previous_;
}

Graph::Scope::Scope(Graph& graph) : previous_(g_active_graph) { g_active_graph = &graph; }

Graph::Scope::~Scope() { g_active_graph = previous_; }

Graph* Graph::active() { return g_active_graph; }

void Graph::backward(const Value& loss) {
  if (loss.rank() != 0) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_string(loss.shape()));
  }
  Seed seed{loss, {1.0}};
  backward(std::span<const Seed>(&seed, 1));
}

void Graph::backward(std::span<const Seed> seeds) {
  for (const auto& node : tape_) node->grad.assign(node->data.size(), 0.0);
  for (const Seed& seed : seeds) {
    Node& n = seed.value.node();
    if (seed.grad.size() != n.data.size()) {
      throw ShapeError("backward seed", n.shape, "seed length " + std::to_string(seed.grad.size()));
    }
    if (!n.requires_grad) continue;
    if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.grad[i] += seed.grad[i];
  }
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node& n = **it;
    if (!n.backward) continue;
    if (std::all_of(n.grad.begin(), n.grad.end(), [](double g) { return g == 0.0; })) continue;
    n.backward(n);
  }
}

namespace detail {

BranchTrace::BranchTrace() : previous_(g_active_trace) { g_active_trace = this; }

BranchTrace::~BranchTrace() { g_active_trace = previous_; }

BranchTrace* BranchTrace::active() { return g_active_trace; }

}  // namespace detail

}  // namespace kpx::ad
