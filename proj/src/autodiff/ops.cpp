#include "kpx/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace kpx::ad {

namespace {

using BackwardFn = std::function<void(Node&)>;

bool any_requires_grad(std::initializer_list<const Value*> inputs) {
  for (const Value* v : inputs) {
    if (v->requires_grad()) return true;
  }
  return false;
}

Value make_result(const char* op, Shape shape, std::vector<double> data,
                  std::vector<std::shared_ptr<Node>> inputs, bool needs_grad, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->data = std::move(data);
  Graph* graph = Graph::active();
  if (graph != nullptr && needs_grad) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(fn);
    graph->record(node);
  }
  return Value(std::move(node));
}

// Accumulation target for input `i`, or nullptr when it carries no gradient.
std::vector<double>* grad_of(Node& out, std::size_t i) {
  Node& in = *out.inputs[i];
  if (!in.requires_grad) return nullptr;
  if (in.grad.size() != in.data.size()) in.grad.assign(in.data.size(), 0.0);
  return &in.grad;
}

bool is_scalar(const Value& v) { return v.rank() == 0; }

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw ShapeError(op, shape, "axis " + std::to_string(axis));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  return out;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Value binary(const char* op, BinaryKind kind, const Value& a, const Value& b) {
  const bool a_scalar = is_scalar(a) && !is_scalar(b);
  const bool b_scalar = is_scalar(b) && !is_scalar(a);
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_size(shape);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[a_scalar ? 0 : i];
    const double y = bd[b_scalar ? 0 : i];
    switch (kind) {
      case BinaryKind::kAdd: out[i] = x + y; break;
      case BinaryKind::kSub: out[i] = x - y; break;
      case BinaryKind::kMul: out[i] = x * y; break;
      case BinaryKind::kDiv: out[i] = x / y; break;
    }
  }
  return make_result(
      op, shape, std::move(out), {a.node_ptr(), b.node_ptr()}, any_requires_grad({&a, &b}),
      [kind, a_scalar, b_scalar](Node& o) {
        const auto& xa = o.inputs[0]->data;
        const auto& xb = o.inputs[1]->data;
        auto* ga = grad_of(o, 0);
        auto* gb = grad_of(o, 1);
        const std::size_t n = o.grad.size();
        for (std::size_t i = 0; i < n; ++i) {
          const double g = o.grad[i];
          const std::size_t ia = a_scalar ? 0 : i;
          const std::size_t ib = b_scalar ? 0 : i;
          switch (kind) {
            case BinaryKind::kAdd:
              if (ga) (*ga)[ia] += g;
              if (gb) (*gb)[ib] += g;
              break;
            case BinaryKind::kSub:
              if (ga) (*ga)[ia] += g;
              if (gb) (*gb)[ib] -= g;
              break;
            case BinaryKind::kMul:
              if (ga) (*ga)[ia] += g * xb[ib];
              if (gb) (*gb)[ib] += g * xa[ia];
              break;
            case BinaryKind::kDiv:
              if (ga) (*ga)[ia] += g / xb[ib];
              if (gb) (*gb)[ib] -= g * xa[ia] / (xb[ib] * xb[ib]);
              break;
          }
        }
      });
}

// Elementwise unary op given forward f(x) and derivative df(x, y).
template <typename F, typename DF>
Value unary(const char* op, const Value& x, F f, DF df) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return make_result(op, x.shape(), std::move(out), {x.node_ptr()}, x.requires_grad(),
                     [df](Node& o) {
                       auto* g = grad_of(o, 0);
                       if (!g) return;
                       const auto& in = o.inputs[0]->data;
                       for (std::size_t i = 0; i < o.grad.size(); ++i) {
                         (*g)[i] += o.grad[i] * df(in[i], o.data[i]);
                       }
                     });
}

}  // namespace

Value add(const Value& a, const Value& b) { return binary("add", BinaryKind::kAdd, a, b); }
Value sub(const Value& a, const Value& b) { return binary("sub", BinaryKind::kSub, a, b); }
Value mul(const Value& a, const Value& b) { return binary("mul", BinaryKind::kMul, a, b); }
Value div(const Value& a, const Value& b) { return binary("div", BinaryKind::kDiv, a, b); }

Value neg(const Value& x) { return scale(x, -1.0); }

Value scale(const Value& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Value add_scalar(const Value& x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Value matmul(const Value& a, const Value& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += aip * brow[j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
                     any_requires_grad({&a, &b}), [m, k, n](Node& o) {
                       const double* A = o.inputs[0]->data.data();
                       const double* B = o.inputs[1]->data.data();
                       const double* G = o.grad.data();
                       if (auto* ga = grad_of(o, 0)) {
                         double* dA = ga->data();
                         for (std::size_t i = 0; i < m; ++i) {
                           const double* grow = G + i * n;
                           for (std::size_t p = 0; p < k; ++p) {
                             const double* brow = B + p * n;
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                             dA[i * k + p] += acc;
                           }
                         }
                       }
                       if (auto* gb = grad_of(o, 1)) {
                         double* dB = gb->data();
                         for (std::size_t i = 0; i < m; ++i) {
                           const double* grow = G + i * n;
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = A[i * k + p];
                             if (aip == 0.0) continue;
                             double* drow = dB + p * n;
                             for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
                           }
                         }
                       }
                     });
}

Value transpose(const Value& x) {
  if (x.rank() != 2) throw ShapeError("transpose", x.shape(), "expected rank 2");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xd = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
  }
  return make_result("transpose", {c, r}, std::move(out), {x.node_ptr()}, x.requires_grad(),
                     [r, c](Node& o) {
                       auto* g = grad_of(o, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < r; ++i) {
                         for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += o.grad[j * r + i];
                       }
                     });
}

Value concat(std::initializer_list<Value> parts, std::size_t axis) {
  return concat(std::span<const Value>(parts.begin(), parts.size()), axis);
}

Value concat(std::span<const Value> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat", first, "axis " + std::to_string(axis));
  Shape shape = first;
  shape[axis] = 0;
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  for (const Value& p : parts) {
    Shape a = p.shape();
    Shape b = first;
    if (a.size() != b.size()) throw ShapeError("concat", first, p.shape());
    a[axis] = b[axis] = 0;
    if (a != b) throw ShapeError("concat", first, p.shape());
    shape[axis] += p.dim(axis);
    needs_grad = needs_grad || p.requires_grad();
    inputs.push_back(p.node_ptr());
  }
  const AxisView view = axis_view("concat", shape, axis);
  std::vector<double> out(shape_size(shape));
  std::vector<std::size_t> extents;
  std::size_t offset = 0;
  for (const Value& p : parts) {
    const std::size_t e = p.dim(axis);
    const auto pd = p.data();
    for (std::size_t o = 0; o < view.outer; ++o) {
      std::copy_n(pd.begin() + o * e * view.inner, e * view.inner,
                  out.begin() + (o * view.extent + offset) * view.inner);
    }
    offset += e;
    extents.push_back(e);
  }
  return make_result("concat", shape, std::move(out), std::move(inputs), needs_grad,
                     [view, extents](Node& o) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < extents.size(); ++k) {
                         const std::size_t e = extents[k];
                         if (auto* g = grad_of(o, k)) {
                           for (std::size_t r = 0; r < view.outer; ++r) {
                             const double* src =
                                 o.grad.data() + (r * view.extent + offset) * view.inner;
                             double* dst = g->data() + r * e * view.inner;
                             for (std::size_t i = 0; i < e * view.inner; ++i) dst[i] += src[i];
                           }
                         }
                         offset += e;
                       }
                     });
}

Value slice(const Value& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisView view = axis_view("slice", x.shape(), axis);
  if (begin > end || end > view.extent) {
    throw ShapeError("slice", x.shape(),
                     "range [" + std::to_string(begin) + "," + std::to_string(end) + ")");
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t len = (end - begin) * view.inner;
  const auto xd = x.data();
  std::vector<double> out(view.outer * len);
  for (std::size_t o = 0; o < view.outer; ++o) {
    std::copy_n(xd.begin() + (o * view.extent + begin) * view.inner, len, out.begin() + o * len);
  }
  return make_result("slice", shape, std::move(out), {x.node_ptr()}, x.requires_grad(),
                     [view, begin, len](Node& o) {
                       auto* g = grad_of(o, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < view.outer; ++r) {
                         double* dst = g->data() + (r * view.extent + begin) * view.inner;
                         const double* src = o.grad.data() + r * len;
                         for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                       }
                     });
}

Value reshape(const Value& x, Shape shape) {
  if (shape_size(shape) != x.size()) throw ShapeError("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x.node_ptr()},
                     x.requires_grad(), [](Node& o) {
                       auto* g = grad_of(o, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
                     });
}

Value gather_rows(const Value& x, std::span<const long> indices) {
  if (x.rank() == 0) throw ShapeError("gather_rows", x.shape(), "rank 0");
  const std::size_t rows = x.dim(0);
  const std::size_t width = rows == 0 ? 0 : x.size() / rows;
  for (long idx : indices) {
    if (idx >= static_cast<long>(rows)) {
      throw ShapeError("gather_rows", x.shape(), "row index " + std::to_string(idx));
    }
  }
  Shape shape = x.shape();
  shape[0] = indices.size();
  std::vector<double> out(indices.size() * width, 0.0);
  const auto xd = x.data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0) continue;
    std::copy_n(xd.begin() + indices[r] * width, width, out.begin() + r * width);
  }
  std::vector<long> idx(indices.begin(), indices.end());
  return make_result("gather_rows", shape, std::move(out), {x.node_ptr()}, x.requires_grad(),
                     [idx = std::move(idx), width](Node& o) {
                       auto* g = grad_of(o, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         if (idx[r] < 0) continue;
                         double* dst = g->data() + idx[r] * width;
                         const double* src = o.grad.data() + r * width;
                         for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                       }
                     });
}

Value repeat(const Value& x, std::size_t axis, std::size_t count) {
  const AxisView view = axis_view("repeat", x.shape(), axis);
  if (view.extent != 1) throw ShapeError("repeat", x.shape(), "axis extent must be 1");
  Shape shape = x.shape();
  shape[axis] = count;
  const auto xd = x.data();
  std::vector<double> out(view.outer * count * view.inner);
  for (std::size_t o = 0; o < view.outer; ++o) {
    for (std::size_t c = 0; c < count; ++c) {
      std::copy_n(xd.begin() + o * view.inner, view.inner,
                  out.begin() + (o * count + c) * view.inner);
    }
  }
  return make_result("repeat", shape, std::move(out), {x.node_ptr()}, x.requires_grad(),
                     [view, count](Node& o) {
                       auto* g = grad_of(o, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < view.outer; ++r) {
                         double* dst = g->data() + r * view.inner;
                         for (std::size_t c = 0; c < count; ++c) {
                           const double* src = o.grad.data() + (r * count + c) * view.inner;
                           for (std::size_t i = 0; i < view.inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Value relu(const Value& x) {
  if (auto* t = detail::BranchTrace::active()) {
    for (double v : x.data()) t->mix(v > 0.0 ? 1 : 2);
  }
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Value sigmoid(const Value& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Value tanh(const Value& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Value exp(const Value& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Value log(const Value& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Value sqrt(const Value& x) {
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Value square(const Value& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Value clamp(const Value& x, double lo, double hi) {
  if (auto* t = detail::BranchTrace::active()) {
    for (double v : x.data()) t->mix(v < lo ? 3 : (v > hi ? 5 : 4));
  }
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

Value huber(const Value& x, double delta) {
  if (auto* t = detail::BranchTrace::active()) {
    for (double v : x.data()) t->mix(std::abs(v) <= delta ? 6 : 7);
  }
  return unary(
      "huber", x,
      [delta](double v) {
        const double a = std::abs(v);
        return a <= delta ? 0.5 * v * v : delta * (a - 0.5 * delta);
      },
      [delta](double v, double) {
        if (std::abs(v) <= delta) return v;
        return v > 0.0 ? delta : -delta;
      });
}

namespace {

Value softmax_impl(const Value& x, std::size_t axis, bool log_space) {
  const char* op = log_space ? "log_softmax" : "softmax";
  const AxisView view = axis_view(op, x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < view.outer; ++o) {
    for (std::size_t i = 0; i < view.inner; ++i) {
      const std::size_t base = o * view.extent * view.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < view.extent; ++e) mx = std::max(mx, xd[base + e * view.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < view.extent; ++e) total += std::exp(xd[base + e * view.inner] - mx);
      const double log_total = std::log(total);
      for (std::size_t e = 0; e < view.extent; ++e) {
        const double shifted = xd[base + e * view.inner] - mx;
        out[base + e * view.inner] = log_space ? shifted - log_total : std::exp(shifted) / total;
      }
    }
  }
  return make_result(op, x.shape(), std::move(out), {x.node_ptr()}, x.requires_grad(),
                     [view, log_space](Node& o) {
                       auto* g = grad_of(o, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < view.outer; ++r) {
                         for (std::size_t i = 0; i < view.inner; ++i) {
                           const std::size_t base = r * view.extent * view.inner + i;
                           double acc = 0.0;
                           for (std::size_t e = 0; e < view.extent; ++e) {
                             const std::size_t k = base + e * view.inner;
                             acc += log_space ? o.grad[k] : o.grad[k] * o.data[k];
                           }
                           for (std::size_t e = 0; e < view.extent; ++e) {
                             const std::size_t k = base + e * view.inner;
                             if (log_space) {
                               (*g)[k] += o.grad[k] - std::exp(o.data[k]) * acc;
                             } else {
                               (*g)[k] += o.data[k] * (o.grad[k] - acc);
                             }
                           }
                         }
                       }
                     });
}

}  // namespace

Value softmax(const Value& x, std::size_t axis) { return softmax_impl(x, axis, false); }
Value log_softmax(const Value& x, std::size_t axis) { return softmax_impl(x, axis, true); }

namespace {

Value sum_like(const char* op, const Value& x, std::size_t axis, double factor) {
  const AxisView view = axis_view(op, x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(view.outer * view.inner, 0.0);
  for (std::size_t o = 0; o < view.outer; ++o) {
    for (std::size_t e = 0; e < view.extent; ++e) {
      const double* src = xd.data() + (o * view.extent + e) * view.inner;
      double* dst = out.data() + o * view.inner;
      for (std::size_t i = 0; i < view.inner; ++i) dst[i] += src[i];
    }
  }
  if (factor != 1.0) {
    for (double& v : out) v *= factor;
  }
  return make_result(op, drop_axis(x.shape(), axis), std::move(out), {x.node_ptr()},
                     x.requires_grad(), [view, factor](Node& o) {
                       auto* g = grad_of(o, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < view.outer; ++r) {
                         const double* src = o.grad.data() + r * view.inner;
                         for (std::size_t e = 0; e < view.extent; ++e) {
                           double* dst = g->data() + (r * view.extent + e) * view.inner;
                           for (std::size_t i = 0; i < view.inner; ++i) dst[i] += factor * src[i];
                         }
                       }
                     });
}

}  // namespace

Value sum(const Value& x, std::size_t axis) { return sum_like("sum", x, axis, 1.0); }

Value mean(const Value& x, std::size_t axis) {
  const AxisView view = axis_view("mean", x.shape(), axis);
  if (view.extent == 0) throw ShapeError("mean", x.shape(), "empty axis");
  return sum_like("mean", x, axis, 1.0 / static_cast<double>(view.extent));
}

Value max(const Value& x, std::size_t axis) {
  const AxisView view = axis_view("max", x.shape(), axis);
  if (view.extent == 0) throw ShapeError("max", x.shape(), "empty axis");
  const auto xd = x.data();
  std::vector<double> out(view.outer * view.inner);
  std::vector<std::size_t> arg(view.outer * view.inner);
  for (std::size_t o = 0; o < view.outer; ++o) {
    for (std::size_t i = 0; i < view.inner; ++i) {
      const std::size_t base = o * view.extent * view.inner + i;
      std::size_t best = 0;
      for (std::size_t e = 1; e < view.extent; ++e) {
        if (xd[base + e * view.inner] > xd[base + best * view.inner]) best = e;
      }
      out[o * view.inner + i] = xd[base + best * view.inner];
      arg[o * view.inner + i] = best;
    }
  }
  if (auto* t = detail::BranchTrace::active()) {
    for (std::size_t a : arg) t->mix(a + 11);
  }
  return make_result("max", drop_axis(x.shape(), axis), std::move(out), {x.node_ptr()},
                     x.requires_grad(), [view, arg = std::move(arg)](Node& o) {
                       auto* g = grad_of(o, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < view.outer; ++r) {
                         for (std::size_t i = 0; i < view.inner; ++i) {
                           const std::size_t k = r * view.inner + i;
                           (*g)[(r * view.extent + arg[k]) * view.inner + i] += o.grad[k];
                         }
                       }
                     });
}

Value sum_all(const Value& x) { return sum(reshape(x, {x.size()}), 0); }

Value mean_all(const Value& x) { return mean(reshape(x, {x.size()}), 0); }

Value detach(const Value& x) {
  return Value::constant(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
}

}  // namespace kpx::ad
