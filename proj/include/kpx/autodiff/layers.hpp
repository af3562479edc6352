#ifndef KPX_AUTODIFF_LAYERS_HPP_
#define KPX_AUTODIFF_LAYERS_HPP_

#include <cstdint>
#include <string>

#include "kpx/autodiff/ops.hpp"
#include "kpx/autodiff/params.hpp"

namespace kpx::ad {

/// Registers `name.w` [in, out] (Glorot) and `name.b` [out] (zeros).
void add_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed);

/// x [n, in] -> x w + b, bias broadcast over rows.
Value linear(ParamBinding& params, const std::string& name, const Value& x);

/// Adds a bias row vector [c] to every row of x [n, c].
Value add_row(const Value& x, const Value& row);

}  // namespace kpx::ad

#endif  // KPX_AUTODIFF_LAYERS_HPP_
