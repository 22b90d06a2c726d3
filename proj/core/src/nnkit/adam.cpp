#include "mwcnp/nnkit/adam.hpp"

#include "mwcnp/errors.hpp"

#include <cmath>

namespace mwcnp::nnkit {

AdamState AdamState::create(std::size_t n, AdamConfig config) {
  AdamState s;
  s.config = config;
  s.m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  s.v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  return s;
}

void adam_update(AdamState& state, ParamVector& params, const ParamVector& grad) {
  if (params.size() != grad.size()) throw DimensionError("adam gradient length", params.size(), grad.size());
  if (static_cast<std::size_t>(state.m.size()) != params.size()) {
    throw DimensionError("adam moment length", params.size(), static_cast<std::size_t>(state.m.size()));
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (Eigen::Index i = 0; i < params.values.size(); ++i) {
    const double g = grad.values(i);
    state.m(i) = c.beta1 * state.m(i) + (1.0 - c.beta1) * g;
    state.v(i) = c.beta2 * state.v(i) + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m(i) / bc1;
    const double v_hat = state.v(i) / bc2;
    params.values(i) -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

AdamResult adam_step(AdamState state, ParamVector params, const ParamVector& grad) {
  adam_update(state, params, grad);
  return AdamResult{std::move(params), std::move(state)};
}

}  // namespace mwcnp::nnkit
