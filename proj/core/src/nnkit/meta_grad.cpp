#include "mwcnp/nnkit/meta_grad.hpp"

#include "mwcnp/errors.hpp"

#include <cmath>

namespace mwcnp::nnkit {

namespace {

void require_finite(const Var& v, const std::string& stage) {
  const auto& m = v.value();
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) throw NonFiniteError(stage, m.data()[i]);
  }
}

}  // namespace

LossAndGrad grad(const std::function<Var(const Var&)>& loss, const ParamVector& at) {
  Var params = Var::parameter(at.values);
  Var out = loss(params);
  require_finite(out, "loss");
  Var g = grad(out, {params})[0];
  require_finite(g, "gradient");
  return LossAndGrad{out.item(), ParamVector(g.value().col(0))};
}

Var apply_update(const InnerUpdate& update, const Var& params, bool differentiable) {
  if (update.offset < 0 || update.length <= 0 || update.offset + update.length > params.rows()) {
    throw DimensionError("inner update slice end", static_cast<std::size_t>(params.rows()),
                         static_cast<std::size_t>(update.offset + update.length));
  }
  Var objective = update.objective(params);
  require_finite(objective, "inner-grad");
  Var g = grad(objective, {params}, differentiable)[0];
  require_finite(g, "inner-grad");
  Var step = update.step_size(params);
  require_finite(step, "inner-grad");
  Var slice_now = slice(params, update.offset, 0, update.length, 1);
  Var slice_grad = slice(g, update.offset, 0, update.length, 1);
  return add(slice_now, mul_scalar(slice_grad, step));
}

LossAndGrad grad_through_update(const MetaLossFn& meta_loss, const InnerUpdate& update, const ParamVector& at,
                                bool first_order) {
  Var params = Var::parameter(at.values);
  Var adapted = apply_update(update, params, !first_order);
  Var loss = meta_loss(adapted, params);
  require_finite(loss, "outer-grad");
  Var g = grad(loss, {params})[0];
  require_finite(g, "outer-grad");
  return LossAndGrad{loss.item(), ParamVector(g.value().col(0))};
}

}  // namespace mwcnp::nnkit
