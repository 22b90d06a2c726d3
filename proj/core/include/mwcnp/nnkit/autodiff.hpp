#pragma once

// Tape-free reverse-mode automatic differentiation over dense matrices.
//
// Every operation records its parents and a backward rule. Backward rules are
// themselves written in terms of Var operations, so a gradient computed with
// `create_graph = true` is again a differentiable Var. That is what lets the
// meta-learner differentiate through an inner gradient step.
//
// Nodes are numbered in creation order. A child is always created after its
// parents, so visiting reachable nodes in descending id order is a valid
// reverse topological order and accumulation order is deterministic.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace mwcnp::nnkit {

using Matrix = Eigen::MatrixXd;

class Var;

namespace detail {

struct Node;
using BackwardFn = std::function<std::vector<Var>(const Var& grad_out, const Var& self)>;

struct Node {
  Matrix value;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  bool requires_grad = false;
  std::uint64_t id = 0;
};

}  // namespace detail

class Var {
 public:
  Var();
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  // Leaf that never receives a gradient.
  static Var constant(Matrix value);
  static Var scalar(double value);
  // Leaf that gradients are taken with respect to.
  static Var parameter(Matrix value);

  const Matrix& value() const { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;  // value of a 1x1 Var
  bool requires_grad() const { return node_->requires_grad; }

  // Same value, no history.
  Var detach() const { return constant(node_->value); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Elementwise arithmetic (shapes must match exactly).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
// a * s where s is a 1x1 Var.
Var mul_scalar(const Var& a, const Var& s);

// Linear algebra and broadcasting.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add_row(const Var& a, const Var& row);          // row is 1 x a.cols()
Var broadcast_rows(const Var& row, Eigen::Index n);  // 1 x c -> n x c
Var broadcast_cols(const Var& col, Eigen::Index n);  // r x 1 -> r x n
Var expand(const Var& scalar, Eigen::Index rows, Eigen::Index cols);
Var col_sum(const Var& a);  // -> 1 x cols
Var row_sum(const Var& a);  // -> rows x 1
Var sum(const Var& a);      // -> 1 x 1
Var mean(const Var& a);

// Pointwise nonlinearities.
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);

// Shape manipulation.
Var slice(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols);
Var pad(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);  // column-major
Var hconcat(const std::vector<Var>& parts);
Var vconcat(const std::vector<Var>& parts);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

// Gradient of a 1x1 `output` with respect to each Var in `wrt`. Entries that
// `output` does not depend on come back as zero matrices. With
// `create_graph` the results stay attached to the graph and can be
// differentiated again; otherwise they are detached constants.
std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph = false);

}  // namespace mwcnp::nnkit
