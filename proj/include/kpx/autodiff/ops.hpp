#ifndef KPX_AUTODIFF_OPS_HPP_
#define KPX_AUTODIFF_OPS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "kpx/autodiff/value.hpp"

// Differentiable primitives. Every op computes its forward value eagerly and,
// when a Graph is active and some input requires a gradient, records a local
// backward rule on that graph.
//
// Elementwise binary ops require equal shapes; the only broadcast allowed is a
// rank-0 scalar against any tensor. Anything else must go through reshape or
// repeat explicitly.

namespace kpx::ad {

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value neg(const Value& x);
Value scale(const Value& x, double factor);
Value add_scalar(const Value& x, double offset);

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(const Value& a, const Value& b) { return mul(a, b); }
inline Value operator/(const Value& a, const Value& b) { return div(a, b); }
inline Value operator-(const Value& x) { return neg(x); }
inline Value operator*(double c, const Value& x) { return scale(x, c); }

/// [m,k] x [k,n] -> [m,n].
Value matmul(const Value& a, const Value& b);
Value transpose(const Value& x);

Value concat(std::span<const Value> parts, std::size_t axis);
Value concat(std::initializer_list<Value> parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Value slice(const Value& x, std::size_t axis, std::size_t begin, std::size_t end);
Value reshape(const Value& x, Shape shape);
/// Selects rows (first-axis entries) by index; a negative index yields a zero
/// row. Gradients scatter-add back to the source rows.
Value gather_rows(const Value& x, std::span<const long> indices);
/// Tiles an axis of extent 1 to extent `count`.
Value repeat(const Value& x, std::size_t axis, std::size_t count);

Value relu(const Value& x);
Value sigmoid(const Value& x);
Value tanh(const Value& x);
Value exp(const Value& x);
Value log(const Value& x);
Value sqrt(const Value& x);
Value square(const Value& x);
/// Gradient is zero outside [lo, hi].
Value clamp(const Value& x, double lo, double hi);
/// Elementwise Huber: 0.5 r^2 for |r| <= delta, delta (|r| - delta/2) beyond.
Value huber(const Value& x, double delta);

Value softmax(const Value& x, std::size_t axis);
Value log_softmax(const Value& x, std::size_t axis);

// Reductions drop the reduced axis.
Value sum(const Value& x, std::size_t axis);
Value mean(const Value& x, std::size_t axis);
Value max(const Value& x, std::size_t axis);
Value sum_all(const Value& x);
Value mean_all(const Value& x);

/// Same data, cut from the graph.
Value detach(const Value& x);

}  // namespace kpx::ad

#endif  // KPX_AUTODIFF_OPS_HPP_
