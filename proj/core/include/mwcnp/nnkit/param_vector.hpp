#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <random>
#include <utility>

namespace mwcnp {

// All randomness in the project flows through explicitly seeded engines.
using Rng = std::mt19937_64;

namespace nnkit {

// Flat parameter vector. Layout is fixed by whoever produced it; for an Mlp it
// is layer-major with each weight matrix (column-major, in x out) followed by
// its bias row.
struct ParamVector {
  Eigen::VectorXd values;

  ParamVector() = default;
  explicit ParamVector(Eigen::VectorXd v) : values(std::move(v)) {}
  static ParamVector zeros(std::size_t n) { return ParamVector(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))); }

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  double& operator[](std::size_t i) { return values(static_cast<Eigen::Index>(i)); }
  double operator[](std::size_t i) const { return values(static_cast<Eigen::Index>(i)); }
  bool all_finite() const { return values.allFinite(); }

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.values.size() == b.values.size() && a.values == b.values;
  }
};

// Concatenates parameter blocks in argument order.
ParamVector concat(std::initializer_list<const ParamVector*> parts);

}  // namespace nnkit
}  // namespace mwcnp
