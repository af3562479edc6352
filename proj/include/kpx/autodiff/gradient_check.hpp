#ifndef KPX_AUTODIFF_GRADIENT_CHECK_HPP_
#define KPX_AUTODIFF_GRADIENT_CHECK_HPP_

#include <cstdint>
#include <functional>
#include <span>

#include "kpx/autodiff/value.hpp"

namespace kpx::ad {

struct GradientCheckOptions {
  double epsilon = 1e-5;
  // Upper bound on sampled coordinates across all parameters.
  std::size_t max_coordinates = 64;
  std::uint64_t seed = 1;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +/- epsilon evaluations took different branches of some
  // non-smooth op (relu, max, clamp, huber) and were therefore not compared.
  std::size_t skipped_at_kinks = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences. `loss_fn` must rebuild the loss from `params` on every call and
/// return a scalar. Error per coordinate is |analytic - numeric| / max(1, |numeric|).
///
/// Throws std::invalid_argument for epsilon outside (0, 1e-3] and
/// std::runtime_error if the loss is non-finite at a perturbed point.
GradientCheckReport gradient_check(const std::function<Value()>& loss_fn,
                                   std::span<Value> params,
                                   const GradientCheckOptions& options = {});

}  // namespace kpx::ad

#endif  // KPX_AUTODIFF_GRADIENT_CHECK_HPP_
