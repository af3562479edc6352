#include "kpx/autodiff/layers.hpp"

namespace kpx::ad {

void add_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
  store.add_glorot(name + ".w", in, out, seed);
  store.add_zeros(name + ".b", {out});
}

Value add_row(const Value& x, const Value& row) {
  const std::size_t c = row.size();
  if (x.rank() != 2 || x.dim(1) != c) throw ShapeError("add_row", x.shape(), row.shape());
  return x + repeat(reshape(row, {1, c}), 0, x.dim(0));
}

Value linear(ParamBinding& params, const std::string& name, const Value& x) {
  return add_row(matmul(x, params(name + ".w")), params(name + ".b"));
}

}  // namespace kpx::ad
