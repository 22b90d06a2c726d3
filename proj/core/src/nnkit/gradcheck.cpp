#include "mwcnp/nnkit/gradcheck.hpp"

#include "mwcnp/errors.hpp"
#include "mwcnp/nnkit/meta_grad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mwcnp::nnkit {

GradCheckReport finite_diff_check(const ScalarFn& f, const ParamVector& at, const ParamVector& analytic,
                                  const GradCheckOptions& opts) {
  if (!(opts.h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be positive");
  if (analytic.size() != at.size()) throw DimensionError("finite_diff_check gradient length", at.size(), analytic.size());

  GradCheckReport report;
  report.rel_errors.resize(at.size());
  ParamVector probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double x = at[i];
    probe[i] = x + opts.h;
    const double up = f(probe);
    probe[i] = x - opts.h;
    const double down = f(probe);
    probe[i] = x;
    const double numeric = (up - down) / (2.0 * opts.h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
    const double err = std::abs(a - numeric) / denom;
    report.rel_errors[i] = err;
    if (!(err <= report.max_rel_error)) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_error <= opts.tol;
  return report;
}

GradCheckReport finite_diff_check(const LossFn& loss, const ParamVector& at, const GradCheckOptions& opts) {
  const LossAndGrad analytic = grad(loss, at);
  auto value = [&loss](const ParamVector& p) {
    NoGradGuard no_grad;
    return loss(Var::constant(p.values)).item();
  };
  return finite_diff_check(value, at, analytic.grad, opts);
}

}  // namespace mwcnp::nnkit
