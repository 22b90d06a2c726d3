#pragma once

#include "mwcnp/nnkit/autodiff.hpp"
#include "mwcnp/nnkit/param_vector.hpp"

#include <functional>

namespace mwcnp::nnkit {

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Reverse-mode gradient of `loss` at `at`. Throws NonFiniteError if the loss
// is NaN/Inf.
LossAndGrad grad(const std::function<Var(const Var&)>& loss, const ParamVector& at);

// One gradient-ascent step on a slice of a parameter vector:
//
//   adapted = params[offset : offset + length] + step_size(params) * d objective / d slice
//
// Everything is a function of the full parameter vector, so the outer
// gradient reaches the slice, any other parameters the objective reads
// (e.g. an advantage network) and the step size.
struct InnerUpdate {
  std::function<Var(const Var& params)> objective;
  std::function<Var(const Var& params)> step_size;  // 1x1
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
};

// Builds the adapted slice. When `differentiable` is false the inner gradient
// is detached (first-order approximation); the step size stays attached.
Var apply_update(const InnerUpdate& update, const Var& params, bool differentiable);

using MetaLossFn = std::function<Var(const Var& adapted, const Var& params)>;

// Gradient of meta_loss(apply_update(params), params) with respect to params.
// `first_order` substitutes the stop-gradient approximation for the inner
// gradient. Non-finite values raise NonFiniteError tagged "inner-grad" or
// "outer-grad".
LossAndGrad grad_through_update(const MetaLossFn& meta_loss, const InnerUpdate& update, const ParamVector& at,
                                bool first_order = false);

}  // namespace mwcnp::nnkit
