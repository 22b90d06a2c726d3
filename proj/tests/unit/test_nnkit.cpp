#include "mwcnp/errors.hpp"
#include "mwcnp/nnkit/adam.hpp"
#include "mwcnp/nnkit/autodiff.hpp"
#include "mwcnp/nnkit/checkpoint.hpp"
#include "mwcnp/nnkit/gradcheck.hpp"
#include "mwcnp/nnkit/meta_grad.hpp"
#include "mwcnp/nnkit/mlp.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace mwcnp;
using namespace mwcnp::nnkit;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mwcnp_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Scalar probe: sum(W .* f(X)) for a fixed random W, so every output entry
// contributes with a distinct weight.
using UnaryOp = std::function<Var(const Var&)>;

GradCheckReport check_unary(const UnaryOp& op, Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                            double shift = 0.0) {
  Rng rng(seed);
  const Matrix x0 = oracle::random_matrix(rng, rows, cols).array() + shift;
  const Matrix probe = oracle::random_matrix(rng, 1, 1);
  const LossFn loss = [&](const Var& p) {
    const Var x = reshape(p, rows, cols);
    const Var y = op(x);
    const Matrix w = Matrix::Constant(y.rows(), y.cols(), 1.0) + Matrix::Constant(y.rows(), y.cols(), probe(0, 0));
    Matrix ramp(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < ramp.size(); ++i) ramp.data()[i] = w.data()[i] * (1.0 + 0.1 * static_cast<double>(i));
    return sum(mul(y, Var::constant(ramp)));
  };
  return finite_diff_check(loss, ParamVector(Eigen::Map<const Eigen::VectorXd>(x0.data(), x0.size())));
}

}  // namespace

TEST_SUITE("nnkit") {

TEST_CASE("forward: all-zero parameters give the zero map") {
  const MlpShape shape = make_shape(3, 5, 2, 4);
  const Mlp mlp{shape, ParamVector::zeros(shape.parameter_count())};
  const Eigen::VectorXd out = forward(mlp, Eigen::Vector3d(0.3, -2.0, 7.5));
  CHECK(out.size() == 4);
  CHECK(out.isZero(0.0));
}

TEST_CASE("forward: single linear layer with identity weights is the identity") {
  const MlpShape shape{{3, 3}, Activation::tanh};
  Eigen::VectorXd p = Eigen::VectorXd::Zero(12);
  p(0) = p(4) = p(8) = 1.0;  // column-major 3x3 identity, zero bias
  const Eigen::VectorXd x = Eigen::Vector3d(0.5, -1.5, 4.0);
  CHECK(forward(Mlp{shape, ParamVector(p)}, x) == x);
}

TEST_CASE("forward: 2-4-1 tanh net with seed 7 matches a hand-rolled evaluation") {
  Rng rng(7);
  const Mlp mlp = init_mlp(make_shape(2, 4, 1, 1), rng);
  // Glorot init leaves biases at zero; give them values so they are exercised.
  Mlp biased = mlp;
  for (std::size_t i = 0; i < biased.params.size(); ++i) biased.params[i] += 0.01 * static_cast<double>(i);
  for (const Mlp* m : {&mlp, static_cast<const Mlp*>(&biased)}) {
    const auto expect = oracle::mlp_forward({2, 4, 1}, false, m->params.values, {1.0, 1.0});
    CHECK(forward(*m, Eigen::Vector2d(1.0, 1.0))(0) == doctest::Approx(expect[0]).epsilon(1e-14));
  }
}

TEST_CASE("forward: random deeper nets agree with the oracle for both activations") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const bool relu = seed % 2 == 1;
    const MlpShape shape = make_shape(3, 6, 2, 2, relu ? Activation::relu : Activation::tanh);
    const ParamVector p(oracle::random_vector(rng, static_cast<Eigen::Index>(shape.parameter_count())));
    const Eigen::VectorXd x = oracle::random_vector(rng, 3);
    const auto expect = oracle::mlp_forward(shape.layer_sizes, relu, p.values, {x(0), x(1), x(2)});
    const Eigen::VectorXd got = forward(Mlp{shape, p}, x);
    CHECK(got(0) == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(got(1) == doctest::Approx(expect[1]).epsilon(1e-12));
  }
}

TEST_CASE("forward: wrong input length reports expected and actual sizes") {
  const MlpShape shape = make_shape(3, 4, 1, 1);
  const Mlp mlp{shape, ParamVector::zeros(shape.parameter_count())};
  try {
    (void)forward(mlp, Eigen::VectorXd::Zero(5));
    FAIL("no exception");
  } catch (const DimensionError& e) {
    CHECK(e.expected() == 3);
    CHECK(e.actual() == 5);
  }
}

TEST_CASE("mlp shape bookkeeping") {
  const MlpShape shape = make_shape(4, 8, 2, 3);
  CHECK(shape.layer_sizes == std::vector<int>{4, 8, 8, 3});
  CHECK(shape.layer_count() == 3);
  CHECK(shape.parameter_count() == 4 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
  CHECK_THROWS_AS((MlpShape{{4}, Activation::tanh}.validate()), DimensionError);
  CHECK(activation_from_string(to_string(Activation::relu)) == Activation::relu);
  CHECK_THROWS_AS(activation_from_string("gelu"), std::invalid_argument);
}

TEST_CASE("autodiff: every op matches central differences over 20 seeds") {
  const std::vector<std::pair<const char*, UnaryOp>> ops = {
      {"tanh", [](const Var& x) { return tanh(x); }},
      {"exp", [](const Var& x) { return exp(scale(x, 0.3)); }},
      {"square", [](const Var& x) { return square(x); }},
      {"sigmoid", [](const Var& x) { return sigmoid(x); }},
      {"softplus", [](const Var& x) { return softplus(x); }},
      {"neg/add_scalar", [](const Var& x) { return add_scalar(neg(x), 2.0); }},
      {"mul", [](const Var& x) { return mul(x, tanh(x)); }},
      {"div", [](const Var& x) { return div(x, add_scalar(square(x), 1.0)); }},
      {"sub", [](const Var& x) { return sub(square(x), x); }},
      {"matmul/transpose", [](const Var& x) { return matmul(transpose(x), tanh(x)); }},
      {"col_sum", [](const Var& x) { return col_sum(square(x)); }},
      {"row_sum", [](const Var& x) { return row_sum(tanh(x)); }},
      {"mean", [](const Var& x) { return mean(square(x)); }},
      {"add_row", [](const Var& x) { return add_row(x, slice(tanh(x), 0, 0, 1, x.cols())); }},
      {"broadcast_rows", [](const Var& x) { return broadcast_rows(slice(square(x), 1, 0, 1, x.cols()), 4); }},
      {"broadcast_cols", [](const Var& x) { return broadcast_cols(slice(tanh(x), 0, 1, x.rows(), 1), 3); }},
      {"expand/mul_scalar", [](const Var& x) { return mul_scalar(x, sum(tanh(x))); }},
      {"expand", [](const Var& x) { return expand(mean(square(x)), 2, 2); }},
      {"pad", [](const Var& x) { return pad(square(x), 1, 2, x.rows() + 3, x.cols() + 4); }},
      {"hconcat/vconcat", [](const Var& x) { return vconcat({hconcat({x, tanh(x)}), hconcat({square(x), x})}); }},
  };
  for (const auto& [name, op] : ops) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const GradCheckReport r = check_unary(op, 3, 2, seed);
      INFO(name << " seed " << seed << " max rel err " << r.max_rel_error);
      CHECK(r.pass);
    }
  }
}

TEST_CASE("autodiff: log and relu away from their kinks") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(check_unary([](const Var& x) { return log(add_scalar(square(x), 0.5)); }, 2, 3, seed).pass);
    Rng rng(seed);
    Matrix x0 = oracle::random_matrix(rng, 2, 3);
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      if (std::abs(x0.data()[i]) < 0.05) x0.data()[i] = 0.5;
    }
    const LossFn loss = [&](const Var& p) { return sum(square(relu(reshape(p, 2, 3)))); };
    CHECK(finite_diff_check(loss, ParamVector(Eigen::Map<const Eigen::VectorXd>(x0.data(), 6))).pass);
  }
}

TEST_CASE("autodiff: create_graph gives differentiable gradients (second derivative of x^3)") {
  const Var x = Var::parameter(Eigen::Vector3d(0.5, -1.0, 2.0));
  const Var y = sum(mul(square(x), x));
  const Var g = grad(y, {x}, true)[0];
  CHECK(g.value().isApprox(3.0 * x.value().array().square().matrix()));
  const Var h = grad(sum(g), {x})[0];
  CHECK(h.value().isApprox(6.0 * x.value()));
}

TEST_CASE("autodiff: gradient of an unused input is zero; no-grad guard records nothing") {
  const Var a = Var::parameter(Eigen::Vector2d(1.0, 2.0));
  const Var b = Var::parameter(Eigen::Vector2d(3.0, 4.0));
  const auto g = grad(sum(square(a)), {a, b});
  CHECK(g[1].value().isZero(0.0));
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_mode_enabled());
    CHECK_FALSE(square(a).requires_grad());
  }
  CHECK(grad_mode_enabled());
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("grad: quadratic, constant and non-finite losses") {
  Rng rng(3);
  const ParamVector theta(oracle::random_vector(rng, 7));
  const LossAndGrad q = grad([](const Var& p) { return scale(sum(square(p)), 0.5); }, theta);
  CHECK(q.grad.values.isApprox(theta.values, 1e-15));
  const LossAndGrad c = grad([](const Var&) { return Var::scalar(4.0); }, theta);
  CHECK(c.loss == 4.0);
  CHECK(c.grad.values.isZero(0.0));
  try {
    (void)grad([](const Var& p) { return log(mul_scalar(sum(p), Var::scalar(0.0))); }, theta);
    FAIL("no exception");
  } catch (const NonFiniteError& e) {
    CHECK(std::isinf(e.value()));
    CHECK(e.stage() == "loss");
  }
}

TEST_CASE("gradient exactness: random MLP Gaussian NLL losses over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const MlpShape shape = make_shape(3, 8, 2, 4);  // 148 parameters
    REQUIRE(shape.parameter_count() <= 200);
    const ParamVector at(oracle::random_vector(rng, static_cast<Eigen::Index>(shape.parameter_count()), 0.5));
    const Matrix x = oracle::random_matrix(rng, 5, 3);
    const Matrix y = oracle::random_matrix(rng, 5, 2);
    const LossFn nll = [&](const Var& p) {
      const Var out = forward(shape, p, 0, Var::constant(x));
      const Var mu = slice(out, 0, 0, 5, 2);
      const Var sigma = add_scalar(softplus(slice(out, 0, 2, 5, 2)), 1e-4);
      const Var z = div(sub(Var::constant(y), mu), sigma);
      return mean(add(log(sigma), scale(square(z), 0.5)));
    };
    const GradCheckReport r = finite_diff_check(nll, at);
    INFO("seed " << seed << " max rel err " << r.max_rel_error);
    CHECK(r.pass);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("finite_diff_check: exact quadratic passes, corrupted gradient fails at its index") {
  Rng rng(11);
  const ParamVector at(oracle::random_vector(rng, 6));
  const ScalarFn f = [](const ParamVector& p) { return 0.5 * p.values.squaredNorm(); };
  const GradCheckReport ok = finite_diff_check(f, at, at);
  CHECK(ok.pass);
  CHECK(ok.max_rel_error < 1e-8);
  ParamVector bad = at;
  bad[4] *= 2.0;
  const GradCheckReport fail = finite_diff_check(f, at, bad);
  CHECK_FALSE(fail.pass);
  CHECK(fail.worst_index == 4);
  CHECK(fail.pass == (fail.max_rel_error <= 1e-4));
}

TEST_CASE("grad_through_update: zero inner objective reduces to the plain meta-loss gradient") {
  Rng rng(5);
  const ParamVector at(oracle::random_vector(rng, 4));
  const InnerUpdate update{[](const Var& p) { return mul_scalar(sum(p), Var::scalar(0.0)); },
                           [](const Var&) { return Var::scalar(0.7); }, 0, 4};
  const MetaLossFn meta = [](const Var& adapted, const Var&) { return sum(square(tanh(adapted))); };
  const LossAndGrad through = grad_through_update(meta, update, at);
  const LossAndGrad plain = grad([](const Var& p) { return sum(square(tanh(p))); }, at);
  CHECK(through.loss == doctest::Approx(plain.loss).epsilon(1e-15));
  CHECK(through.grad.values.isApprox(plain.grad.values, 1e-14));
}

TEST_CASE("grad_through_update: one-parameter quadratics match the hand-derived second-order gradient") {
  // inner f(t) = -c (t - a)^2 / 2, t' = t + alpha f'(t); outer L = (t' - b)^2 / 2
  // dL/dt = (t' - b)(1 - alpha c); first-order drops the (1 - alpha c) factor.
  const double a = 0.4, b = -1.2, c = 3.0, alpha = 0.1, t = 0.9;
  const InnerUpdate update{
      [&](const Var& p) { return scale(square(add_scalar(p, -a)), -0.5 * c); },
      [&](const Var&) { return Var::scalar(alpha); }, 0, 1};
  const MetaLossFn meta = [&](const Var& adapted, const Var&) { return scale(square(add_scalar(adapted, -b)), 0.5); };
  const double t_adapted = t - alpha * c * (t - a);
  const ParamVector at(Eigen::VectorXd::Constant(1, t));
  const LossAndGrad second = grad_through_update(meta, update, at, false);
  const LossAndGrad first = grad_through_update(meta, update, at, true);
  CHECK(second.loss == doctest::Approx(0.5 * (t_adapted - b) * (t_adapted - b)).epsilon(1e-14));
  CHECK(second.grad[0] == doctest::Approx((t_adapted - b) * (1.0 - alpha * c)).epsilon(1e-14));
  CHECK(first.grad[0] == doctest::Approx(t_adapted - b).epsilon(1e-14));
}

TEST_CASE("second-order correctness: tiny nets through the update match finite differences over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    const MlpShape policy = make_shape(2, 3, 1, 1);  // 13 params
    const MlpShape critic = make_shape(2, 2, 1, 1);  // 9 params
    const Eigen::Index np = static_cast<Eigen::Index>(policy.parameter_count());
    const Eigen::Index nc = static_cast<Eigen::Index>(critic.parameter_count());
    const ParamVector at(oracle::random_vector(rng, np + nc + 1, 0.5));
    REQUIRE(at.size() <= 30);
    const Matrix x = oracle::random_matrix(rng, 4, 2);
    const Matrix y = oracle::random_matrix(rng, 4, 1);
    const InnerUpdate update{
        [&](const Var& p) {
          const Var pred = forward(policy, p, 0, Var::constant(x));
          const Var w = forward(critic, p, np, Var::constant(x));
          return mean(mul(pred, w));
        },
        [&](const Var& p) { return exp(slice(p, np + nc, 0, 1, 1)); }, 0, np};
    const MetaLossFn meta = [&](const Var& adapted, const Var&) {
      return mean(square(sub(forward(policy, adapted, 0, Var::constant(x)), Var::constant(y))));
    };
    const LossAndGrad lg = grad_through_update(meta, update, at);
    // The composed map evaluated numerically: the inner gradient is a plain
    // (first-order, separately checked) reverse-mode gradient, and only the
    // outer differentiation is left to finite differences.
    const ScalarFn composed = [&](const ParamVector& p) {
      const Eigen::VectorXd rest = p.values.tail(nc + 1);
      const LossAndGrad inner = grad(
          [&](const Var& t) { return update.objective(vconcat({t, Var::constant(rest)})); },
          ParamVector(p.values.head(np)));
      const Eigen::VectorXd adapted = p.values.head(np) + std::exp(p.values(np + nc)) * inner.grad.values;
      NoGradGuard guard;
      return meta(Var::constant(adapted), Var::constant(p.values)).item();
    };
    GradCheckOptions opts;
    opts.tol = 1e-3;
    const GradCheckReport r = finite_diff_check(composed, at, lg.grad, opts);
    INFO("seed " << seed << " max rel err " << r.max_rel_error);
    CHECK(r.pass);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged and decays moments") {
  AdamState s = AdamState::create(3);
  s.m = Eigen::Vector3d(1.0, -2.0, 0.5);
  s.v = Eigen::Vector3d(4.0, 1.0, 0.25);
  const ParamVector p(Eigen::Vector3d(0.1, 0.2, 0.3));
  const AdamResult r = adam_step(s, p, ParamVector::zeros(3));
  CHECK(r.state.m.isApprox(0.9 * s.m));
  CHECK(r.state.v.isApprox(0.999 * s.v));
  CHECK(r.state.step == 1);
  // Decayed moments still move the parameters, so only check the zero-moment case for "unchanged".
  const AdamResult fresh = adam_step(AdamState::create(3), p, ParamVector::zeros(3));
  CHECK(fresh.params == p);
}

TEST_CASE("adam: first step follows the bias-corrected recurrence") {
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  const Eigen::Vector3d g(0.5, -2.0, 1e-3);
  const ParamVector p(Eigen::Vector3d(1.0, 1.0, 1.0));
  const AdamResult r = adam_step(AdamState::create(3, cfg), p, ParamVector(g));
  for (int i = 0; i < 3; ++i) {
    const double m = (1 - 0.9) * g(i), v = (1 - 0.999) * g(i) * g(i);
    const double mh = m / (1 - 0.9), vh = v / (1 - 0.999);
    CHECK(r.params[static_cast<std::size_t>(i)] - 1.0 == doctest::Approx(-cfg.lr * mh / (std::sqrt(vh) + cfg.eps)).epsilon(1e-12));
    CHECK(std::abs(r.params[static_cast<std::size_t>(i)] - 1.0) == doctest::Approx(cfg.lr).epsilon(1e-4));
  }
}

TEST_CASE("adam: repeated identical gradients converge to lr-sized steps against the gradient sign") {
  const AdamConfig cfg{0.005};
  AdamState s = AdamState::create(2, cfg);
  ParamVector p = ParamVector::zeros(2);
  const ParamVector g(Eigen::Vector2d(3.0, -0.2));
  Eigen::Vector2d last;
  for (int k = 0; k < 2000; ++k) {
    const Eigen::Vector2d before = p.values;
    adam_update(s, p, g);
    last = p.values - before;
  }
  CHECK(last(0) == doctest::Approx(-cfg.lr).epsilon(1e-6));
  CHECK(last(1) == doctest::Approx(cfg.lr).epsilon(1e-6));
  CHECK(s.step == 2000);
  CHECK_THROWS_AS(adam_update(s, p, ParamVector::zeros(3)), DimensionError);
}

TEST_CASE("determinism: identical seeds give bit-identical parameters after training steps") {
  const auto run = [] {
    Rng rng(42);
    const MlpShape shape = make_shape(2, 16, 2, 1);
    ParamVector p = init_params(shape, rng);
    AdamState s = AdamState::create(p.size());
    const Matrix x = oracle::random_matrix(rng, 32, 2);
    const Matrix y = x.col(0).array().sin().matrix();
    for (int k = 0; k < 50; ++k) {
      const LossAndGrad lg = grad(
          [&](const Var& q) { return mean(square(sub(forward(shape, q, 0, Var::constant(x)), Var::constant(y)))); },
          p);
      adam_update(s, p, lg.grad);
    }
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("concat keeps block order") {
  const ParamVector a(Eigen::Vector2d(1, 2));
  const ParamVector b(Eigen::Vector3d(3, 4, 5));
  const ParamVector c = concat({&a, &b});
  CHECK(c.size() == 5);
  CHECK(c.values.head(2) == a.values);
  CHECK(c.values.tail(3) == b.values);
}

TEST_CASE("checkpoint: round trip, bad magic, truncation") {
  Rng rng(9);
  const MlpShape shape = make_shape(3, 4, 1, 2, Activation::relu);
  Checkpoint ckpt;
  ckpt.fields = {{"S", 3}, {"A", -1}};
  ckpt.sections.push_back({"net", shape, init_params(shape, rng)});
  ckpt.sections.push_back({"scalar", MlpShape{}, ParamVector(Eigen::VectorXd::Constant(1, -0.25))});
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.fields == ckpt.fields);
  REQUIRE(back.sections.size() == 2);
  CHECK(back.section("net").shape == shape);
  CHECK(back.section("net").params == ckpt.sections[0].params);
  CHECK(back.section("scalar").params[0] == -0.25);
  CHECK(back.field("A").value() == -1);
  CHECK_FALSE(back.field("missing").has_value());
  CHECK_THROWS_AS(back.section("missing"), CheckpointError);

  {
    std::ifstream in(path, std::ios::binary);
    std::string head(6, '\0');
    in.read(head.data(), 6);
    CHECK(head == "MWCNP1");
  }
  const auto bytes = std::filesystem::file_size(path);
  const auto bad = temp_file("bad.ckpt");
  std::filesystem::copy_file(path, bad, std::filesystem::copy_options::overwrite_existing);
  {
    std::fstream f(bad, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.put('X');
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("bad magic"), CheckpointError);
  std::filesystem::copy_file(path, bad, std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(bad, bytes - 5);
  CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("truncated"), CheckpointError);
}

}  // TEST_SUITE
