#pragma once

#include "mwcnp/nnkit/param_vector.hpp"

#include <cstdint>

namespace mwcnp::nnkit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;

  static AdamState create(std::size_t n, AdamConfig config = {});
};

struct AdamResult {
  ParamVector params;
  AdamState state;
};

// Bias-corrected Adam update. Throws DimensionError if the three lengths differ.
AdamResult adam_step(AdamState state, ParamVector params, const ParamVector& grad);

// In-place form used by the training loops.
void adam_update(AdamState& state, ParamVector& params, const ParamVector& grad);

}  // namespace mwcnp::nnkit
