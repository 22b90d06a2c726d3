#pragma once

#include "mwcnp/nnkit/autodiff.hpp"
#include "mwcnp/nnkit/param_vector.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace mwcnp::nnkit {

using LossFn = std::function<Var(const Var& params)>;
using ScalarFn = std::function<double(const ParamVector& params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> rel_errors;
  bool pass = false;
};

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // Relative errors use max(|analytic|, |numeric|, floor) as denominator so
  // coordinates with vanishing gradient are judged on absolute error.
  double floor = 1e-3;
};

// Central differences of `f` at `at`, compared coordinate-wise against
// `analytic`.
GradCheckReport finite_diff_check(const ScalarFn& f, const ParamVector& at, const ParamVector& analytic,
                                  const GradCheckOptions& opts = {});

// Same, with the analytic side taken from reverse-mode differentiation of `loss`.
GradCheckReport finite_diff_check(const LossFn& loss, const ParamVector& at, const GradCheckOptions& opts = {});

}  // namespace mwcnp::nnkit
