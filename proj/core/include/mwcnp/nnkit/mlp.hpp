#pragma once

#include "mwcnp/nnkit/autodiff.hpp"
#include "mwcnp/nnkit/param_vector.hpp"

#include <string>
#include <vector>

namespace mwcnp::nnkit {

enum class Activation { tanh, relu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct MlpShape {
  std::vector<int> layer_sizes;  // input, hidden..., output
  Activation activation = Activation::tanh;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  std::size_t parameter_count() const;
  void validate() const;

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

// input -> hidden x depth -> output
MlpShape make_shape(int input, int hidden, int depth, int output, Activation act = Activation::tanh);

struct Mlp {
  MlpShape shape;
  ParamVector params;
};

// Glorot-uniform weights, zero biases.
Mlp init_mlp(const MlpShape& shape, Rng& rng);
ParamVector init_params(const MlpShape& shape, Rng& rng);

// Differentiable batched forward pass. `params` is a flat column vector
// holding this network's parameters starting at `offset`; `input` is
// N x input_size. Hidden layers use the shape's activation, the output layer
// is linear.
Var forward(const MlpShape& shape, const Var& params, Eigen::Index offset, const Var& input);

// Single-sample numeric forward pass.
Eigen::VectorXd forward(const Mlp& mlp, const Eigen::VectorXd& input);

}  // namespace mwcnp::nnkit
