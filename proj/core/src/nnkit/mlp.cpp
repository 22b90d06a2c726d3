#include "mwcnp/nnkit/mlp.hpp"

#include "mwcnp/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace mwcnp::nnkit {

ParamVector concat(std::initializer_list<const ParamVector*> parts) {
  Eigen::Index n = 0;
  for (const auto* p : parts) n += p->values.size();
  Eigen::VectorXd out(n);
  Eigen::Index off = 0;
  for (const auto* p : parts) {
    out.segment(off, p->values.size()) = p->values;
    off += p->values.size();
  }
  return ParamVector(std::move(out));
}

std::string to_string(Activation act) { return act == Activation::tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::size_t MlpShape::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += static_cast<std::size_t>(layer_sizes[l] + 1) * static_cast<std::size_t>(layer_sizes[l + 1]);
  }
  return n;
}

void MlpShape::validate() const {
  if (layer_sizes.size() < 2) throw DimensionError("mlp layer count (minimum)", 2, layer_sizes.size());
  for (int s : layer_sizes) {
    if (s <= 0) throw std::invalid_argument("mlp layer sizes must be positive");
  }
}

MlpShape make_shape(int input, int hidden, int depth, int output, Activation act) {
  MlpShape shape;
  shape.activation = act;
  shape.layer_sizes.push_back(input);
  for (int i = 0; i < depth; ++i) shape.layer_sizes.push_back(hidden);
  shape.layer_sizes.push_back(output);
  return shape;
}

ParamVector init_params(const MlpShape& shape, Rng& rng) {
  shape.validate();
  Eigen::VectorXd values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.parameter_count()));
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < shape.layer_count(); ++l) {
    const int in = shape.layer_sizes[l];
    const int out = shape.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (int i = 0; i < in * out; ++i) values(off + i) = dist(rng);
    off += static_cast<Eigen::Index>(in) * out + out;
  }
  return ParamVector(std::move(values));
}

Mlp init_mlp(const MlpShape& shape, Rng& rng) { return Mlp{shape, init_params(shape, rng)}; }

Var forward(const MlpShape& shape, const Var& params, Eigen::Index offset, const Var& input) {
  if (input.cols() != shape.input_size()) {
    throw DimensionError("mlp input width", static_cast<std::size_t>(shape.input_size()),
                         static_cast<std::size_t>(input.cols()));
  }
  if (params.cols() != 1 || offset + static_cast<Eigen::Index>(shape.parameter_count()) > params.rows()) {
    throw DimensionError("mlp parameter vector length", static_cast<std::size_t>(offset) + shape.parameter_count(),
                         static_cast<std::size_t>(params.rows()));
  }
  Var h = input;
  Eigen::Index off = offset;
  for (std::size_t l = 0; l < shape.layer_count(); ++l) {
    const Eigen::Index in = shape.layer_sizes[l];
    const Eigen::Index out = shape.layer_sizes[l + 1];
    Var w = reshape(slice(params, off, 0, in * out, 1), in, out);
    off += in * out;
    Var b = reshape(slice(params, off, 0, out, 1), 1, out);
    off += out;
    h = add_row(matmul(h, w), b);
    if (l + 1 < shape.layer_count()) h = shape.activation == Activation::tanh ? tanh(h) : relu(h);
  }
  return h;
}

Eigen::VectorXd forward(const Mlp& mlp, const Eigen::VectorXd& input) {
  if (mlp.params.size() != mlp.shape.parameter_count()) {
    throw DimensionError("mlp parameter count", mlp.shape.parameter_count(), mlp.params.size());
  }
  if (input.size() != mlp.shape.input_size()) {
    throw DimensionError("mlp input length", static_cast<std::size_t>(mlp.shape.input_size()),
                         static_cast<std::size_t>(input.size()));
  }
  NoGradGuard no_grad;
  Var out = forward(mlp.shape, Var::constant(mlp.params.values), 0, Var::constant(input.transpose()));
  return out.value().row(0).transpose();
}

}  // namespace mwcnp::nnkit
