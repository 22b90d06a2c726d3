#include "mwcnp/nnkit/autodiff.hpp"

#include "mwcnp/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <unordered_map>
#include <unordered_set>

namespace mwcnp::nnkit {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_mode = true;

std::shared_ptr<detail::Node> new_node(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

// Records `value` as the result of an op over `inputs`. When no input needs a
// gradient (or recording is off) the result is a plain constant.
Var record(Matrix value, std::initializer_list<Var> inputs, detail::BackwardFn backward) {
  auto node = new_node(std::move(value));
  if (!g_grad_mode) return Var(std::move(node));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return Var(std::move(node));
  node->requires_grad = true;
  node->parents.reserve(inputs.size());
  for (const auto& in : inputs) node->parents.push_back(in.node());
  node->backward = std::move(backward);
  return Var(std::move(node));
}

Var record_n(Matrix value, const std::vector<Var>& inputs, detail::BackwardFn backward) {
  auto node = new_node(std::move(value));
  if (!g_grad_mode) return Var(std::move(node));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return Var(std::move(node));
  node->requires_grad = true;
  node->parents.reserve(inputs.size());
  for (const auto& in : inputs) node->parents.push_back(in.node());
  node->backward = std::move(backward);
  return Var(std::move(node));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows()) {
    throw DimensionError(std::string(op) + " row count", static_cast<std::size_t>(a.rows()),
                         static_cast<std::size_t>(b.rows()));
  }
  if (a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + " column count", static_cast<std::size_t>(a.cols()),
                         static_cast<std::size_t>(b.cols()));
  }
}

void check_scalar(const Var& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw DimensionError(std::string(op) + " expects a 1x1 operand (element count)", 1,
                         static_cast<std::size_t>(s.rows() * s.cols()));
  }
}

}  // namespace

Var::Var() = default;

Var Var::constant(Matrix value) { return Var(new_node(std::move(value))); }

Var Var::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Var::parameter(Matrix value) {
  auto node = new_node(std::move(value));
  node->requires_grad = true;
  return Var(std::move(node));
}

double Var::item() const {
  check_scalar(*this, "item");
  return node_->value(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

bool grad_mode_enabled() { return g_grad_mode; }

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return record(a.value() + b.value(), {a, b}, [a, b](const Var& g, const Var&) {
    return std::vector<Var>{a.requires_grad() ? g : Var(), b.requires_grad() ? g : Var()};
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return record(a.value() - b.value(), {a, b}, [a, b](const Var& g, const Var&) {
    return std::vector<Var>{a.requires_grad() ? g : Var(), b.requires_grad() ? neg(g) : Var()};
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](const Var& g, const Var&) {
    return std::vector<Var>{a.requires_grad() ? mul(g, b) : Var(),
                            b.requires_grad() ? mul(g, a) : Var()};
  });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  return record(a.value().cwiseQuotient(b.value()), {a, b}, [a, b](const Var& g, const Var& y) {
    return std::vector<Var>{a.requires_grad() ? div(g, b) : Var(),
                            b.requires_grad() ? neg(div(mul(g, y), b)) : Var()};
  });
}

Var neg(const Var& a) {
  return record(-a.value(), {a}, [](const Var& g, const Var&) { return std::vector<Var>{neg(g)}; });
}

Var scale(const Var& a, double factor) {
  return record(a.value() * factor, {a}, [factor](const Var& g, const Var&) {
    return std::vector<Var>{scale(g, factor)};
  });
}

Var add_scalar(const Var& a, double offset) {
  return record(a.value().array() + offset, {a},
                [](const Var& g, const Var&) { return std::vector<Var>{g}; });
}

Var mul_scalar(const Var& a, const Var& s) {
  check_scalar(s, "mul_scalar");
  return record(a.value() * s.value()(0, 0), {a, s}, [a, s](const Var& g, const Var&) {
    return std::vector<Var>{a.requires_grad() ? mul_scalar(g, s) : Var(),
                            s.requires_grad() ? sum(mul(g, a)) : Var()};
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimension", static_cast<std::size_t>(a.cols()),
                         static_cast<std::size_t>(b.rows()));
  }
  Matrix out = a.value() * b.value();
  return record(std::move(out), {a, b}, [a, b](const Var& g, const Var&) {
    return std::vector<Var>{a.requires_grad() ? matmul(g, transpose(b)) : Var(),
                            b.requires_grad() ? matmul(transpose(a), g) : Var()};
  });
}

Var transpose(const Var& a) {
  return record(a.value().transpose(), {a},
                [](const Var& g, const Var&) { return std::vector<Var>{transpose(g)}; });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1) throw DimensionError("add_row bias rows", 1, static_cast<std::size_t>(row.rows()));
  if (row.cols() != a.cols()) {
    throw DimensionError("add_row bias width", static_cast<std::size_t>(a.cols()),
                         static_cast<std::size_t>(row.cols()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return record(std::move(out), {a, row}, [a, row](const Var& g, const Var&) {
    return std::vector<Var>{a.requires_grad() ? g : Var(), row.requires_grad() ? col_sum(g) : Var()};
  });
}

Var broadcast_rows(const Var& row, Eigen::Index n) {
  if (row.rows() != 1) {
    throw DimensionError("broadcast_rows input rows", 1, static_cast<std::size_t>(row.rows()));
  }
  Matrix out = row.value().replicate(n, 1);
  return record(std::move(out), {row}, [](const Var& g, const Var&) { return std::vector<Var>{col_sum(g)}; });
}

Var broadcast_cols(const Var& col, Eigen::Index n) {
  if (col.cols() != 1) {
    throw DimensionError("broadcast_cols input cols", 1, static_cast<std::size_t>(col.cols()));
  }
  Matrix out = col.value().replicate(1, n);
  return record(std::move(out), {col}, [](const Var& g, const Var&) { return std::vector<Var>{row_sum(g)}; });
}

Var expand(const Var& scalar, Eigen::Index rows, Eigen::Index cols) {
  check_scalar(scalar, "expand");
  return record(Matrix::Constant(rows, cols, scalar.value()(0, 0)), {scalar},
                [](const Var& g, const Var&) { return std::vector<Var>{sum(g)}; });
}

// Reductions use explicit index-ascending loops so the summation order is
// fixed independently of Eigen's vectorization choices.
Var col_sum(const Var& a) {
  const Matrix& v = a.value();
  Matrix out = Matrix::Zero(1, v.cols());
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < v.rows(); ++r) acc += v(r, c);
    out(0, c) = acc;
  }
  const Eigen::Index n = v.rows();
  return record(std::move(out), {a}, [n](const Var& g, const Var&) {
    return std::vector<Var>{broadcast_rows(g, n)};
  });
}

Var row_sum(const Var& a) {
  const Matrix& v = a.value();
  Matrix out = Matrix::Zero(v.rows(), 1);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < v.cols(); ++c) acc += v(r, c);
    out(r, 0) = acc;
  }
  const Eigen::Index n = v.cols();
  return record(std::move(out), {a}, [n](const Var& g, const Var&) {
    return std::vector<Var>{broadcast_cols(g, n)};
  });
}

Var sum(const Var& a) {
  const Matrix& v = a.value();
  double acc = 0.0;
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    for (Eigen::Index r = 0; r < v.rows(); ++r) acc += v(r, c);
  }
  const Eigen::Index rows = v.rows();
  const Eigen::Index cols = v.cols();
  return record(Matrix::Constant(1, 1, acc), {a}, [rows, cols](const Var& g, const Var&) {
    return std::vector<Var>{expand(g, rows, cols)};
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.rows() * a.cols());
  return scale(sum(a), 1.0 / n);
}

Var tanh(const Var& a) {
  return record(a.value().array().tanh().matrix(), {a}, [](const Var& g, const Var& y) {
    return std::vector<Var>{mul(g, add_scalar(neg(square(y)), 1.0))};
  });
}

Var relu(const Var& a) {
  return record(a.value().cwiseMax(0.0), {a}, [a](const Var& g, const Var&) {
    Matrix mask = (a.value().array() > 0.0).cast<double>().matrix();
    return std::vector<Var>{mul(g, Var::constant(std::move(mask)))};
  });
}

Var exp(const Var& a) {
  return record(a.value().array().exp().matrix(), {a},
                [](const Var& g, const Var& y) { return std::vector<Var>{mul(g, y)}; });
}

Var log(const Var& a) {
  return record(a.value().array().log().matrix(), {a},
                [a](const Var& g, const Var&) { return std::vector<Var>{div(g, a)}; });
}

Var square(const Var& a) {
  return record(a.value().array().square().matrix(), {a},
                [a](const Var& g, const Var&) { return std::vector<Var>{scale(mul(g, a), 2.0)}; });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return record(std::move(out), {a}, [](const Var& g, const Var& y) {
    return std::vector<Var>{mul(g, mul(y, add_scalar(neg(y), 1.0)))};
  });
}

Var softplus(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    // log(1 + e^x) without overflow.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
  return record(std::move(out), {a},
                [a](const Var& g, const Var&) { return std::vector<Var>{mul(g, sigmoid(a))}; });
}

Var slice(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols) {
  if (row < 0 || col < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    throw DimensionError("slice extent exceeds source (elements)",
                         static_cast<std::size_t>(a.rows() * a.cols()),
                         static_cast<std::size_t>((row + rows) * (col + cols)));
  }
  Matrix out = a.value().block(row, col, rows, cols);
  const Eigen::Index src_rows = a.rows();
  const Eigen::Index src_cols = a.cols();
  return record(std::move(out), {a}, [=](const Var& g, const Var&) {
    return std::vector<Var>{pad(g, row, col, src_rows, src_cols)};
  });
}

Var pad(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols) {
  if (row < 0 || col < 0 || row + a.rows() > rows || col + a.cols() > cols) {
    throw DimensionError("pad target smaller than source (elements)",
                         static_cast<std::size_t>((row + a.rows()) * (col + a.cols())),
                         static_cast<std::size_t>(rows * cols));
  }
  Matrix out = Matrix::Zero(rows, cols);
  out.block(row, col, a.rows(), a.cols()) = a.value();
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return record(std::move(out), {a}, [=](const Var& g, const Var&) {
    return std::vector<Var>{slice(g, row, col, r, c)};
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.rows() * a.cols()) {
    throw DimensionError("reshape element count", static_cast<std::size_t>(a.rows() * a.cols()),
                         static_cast<std::size_t>(rows * cols));
  }
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return record(std::move(out), {a},
                [r, c](const Var& g, const Var&) { return std::vector<Var>{reshape(g, r, c)}; });
}

Var hconcat(const std::vector<Var>& parts) {
  if (parts.empty()) return Var::constant(Matrix(0, 0));
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("hconcat row count", static_cast<std::size_t>(rows),
                           static_cast<std::size_t>(p.rows()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return record_n(std::move(out), parts, [parts, offsets](const Var& g, const Var&) {
    std::vector<Var> grads;
    grads.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      grads.push_back(parts[i].requires_grad()
                          ? slice(g, 0, offsets[i], parts[i].rows(), parts[i].cols())
                          : Var());
    }
    return grads;
  });
}

Var vconcat(const std::vector<Var>& parts) {
  if (parts.empty()) return Var::constant(Matrix(0, 0));
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("vconcat column count", static_cast<std::size_t>(cols),
                           static_cast<std::size_t>(p.cols()));
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    offsets.push_back(off);
    off += p.rows();
  }
  return record_n(std::move(out), parts, [parts, offsets](const Var& g, const Var&) {
    std::vector<Var> grads;
    grads.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      grads.push_back(parts[i].requires_grad()
                          ? slice(g, offsets[i], 0, parts[i].rows(), parts[i].cols())
                          : Var());
    }
    return grads;
  });
}

std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph) {
  check_scalar(output, "grad output");

  std::vector<Var> result;
  result.reserve(wrt.size());
  if (!output.requires_grad()) {
    for (const auto& w : wrt) result.push_back(Var::constant(Matrix::Zero(w.rows(), w.cols())));
    return result;
  }

  // Collect every node on a path to the output that needs a gradient.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{output.node()};
  seen.insert(output.node().get());
  while (!stack.empty()) {
    auto node = std::move(stack.back());
    stack.pop_back();
    for (const auto& p : node->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    order.push_back(std::move(node));
  }
  std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) { return x->id > y->id; });

  std::unordered_set<const detail::Node*> keep;
  for (const auto& w : wrt) keep.insert(w.node().get());

  std::optional<NoGradGuard> no_grad;
  if (!create_graph) no_grad.emplace();

  std::unordered_map<const detail::Node*, Var> grads;
  grads.emplace(output.node().get(), Var::constant(Matrix::Ones(1, 1)));
  for (const auto& node : order) {
    auto it = grads.find(node.get());
    if (it == grads.end()) continue;
    if (node->backward) {
      Var self(node);
      std::vector<Var> parent_grads = node->backward(it->second, self);
      for (std::size_t i = 0; i < node->parents.size(); ++i) {
        const auto& parent = node->parents[i];
        if (!parent->requires_grad || !parent_grads[i].node()) continue;
        auto [slot, inserted] = grads.try_emplace(parent.get(), parent_grads[i]);
        if (!inserted) slot->second = add(slot->second, parent_grads[i]);
      }
    }
    if (!keep.count(node.get())) grads.erase(node.get());
  }

  for (const auto& w : wrt) {
    auto it = grads.find(w.node().get());
    if (it == grads.end()) {
      result.push_back(Var::constant(Matrix::Zero(w.rows(), w.cols())));
    } else {
      result.push_back(create_graph ? it->second : it->second.detach());
    }
  }
  return result;
}

}  // namespace mwcnp::nnkit
