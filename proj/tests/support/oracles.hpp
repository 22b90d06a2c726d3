#pragma once

// Independent reference computations the tests compare the library against.
// Nothing here calls into the code under test except for plain data types.

#include "mwcnp/envs.hpp"
#include "mwcnp/nnkit/mlp.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

// Straight-line MLP evaluation from the documented layout: per layer a
// column-major (in x out) weight block followed by the bias.
inline Vec mlp_forward(const std::vector<int>& sizes, bool relu, const Eigen::VectorXd& params, Vec x) {
  std::size_t p = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    Vec y(static_cast<std::size_t>(out), 0.0);
    for (int j = 0; j < out; ++j) {
      double acc = 0.0;
      for (int i = 0; i < in; ++i) acc += x[static_cast<std::size_t>(i)] * params(static_cast<Eigen::Index>(p + j * in + i));
      y[static_cast<std::size_t>(j)] = acc;
    }
    p += static_cast<std::size_t>(in * out);
    for (int j = 0; j < out; ++j) y[static_cast<std::size_t>(j)] += params(static_cast<Eigen::Index>(p + j));
    p += static_cast<std::size_t>(out);
    if (l + 2 < sizes.size()) {
      for (double& v : y) v = relu ? (v > 0 ? v : 0.0) : std::tanh(v);
    }
    x = y;
  }
  return x;
}

// log N(x; mu, sigma^2), summed over dimensions.
inline double gaussian_log_density(const Vec& x, const Vec& mu, const Vec& sigma) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double var = sigma[i] * sigma[i];
    total += -0.5 * std::log(2.0 * std::numbers::pi * var) - (x[i] - mu[i]) * (x[i] - mu[i]) / (2.0 * var);
  }
  return total;
}

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }

// Point agent: position += clip(a, 0.1) + 0.05 (cos phi, sin phi).
inline Vec point_step(const Vec& s, const Vec& a, double phi) {
  auto c = [](double v) { return v > 0.1 ? 0.1 : (v < -0.1 ? -0.1 : v); };
  return {s[0] + c(a[0]) + 0.05 * std::cos(phi), s[1] + c(a[1]) + 0.05 * std::sin(phi)};
}

inline double point_reward(const Vec& s_next) { return -std::hypot(s_next[0] - 1.0, s_next[1]); }

// Cart-pole from the equations of motion (Barto, Sutton & Anderson form),
// integrated with explicit Euler at dt = 0.02. State (x, x_dot, th, th_dot).
inline Vec cartpole_step(const Vec& s, double force) {
  const double g = 9.8, mc = 1.0, mp = 0.1, l = 0.5, dt = 0.02;
  const double th = s[2], thd = s[3];
  const double num = g * std::sin(th) +
                     std::cos(th) * ((-force - mp * l * thd * thd * std::sin(th)) / (mc + mp));
  const double den = l * (4.0 / 3.0 - mp * std::cos(th) * std::cos(th) / (mc + mp));
  const double thdd = num / den;
  const double xdd = (force + mp * l * (thd * thd * std::sin(th) - thdd * std::cos(th))) / (mc + mp);
  return {s[0] + dt * s[1], s[1] + dt * xdd, s[2] + dt * s[3], s[3] + dt * thdd};
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = d(rng);
  return m;
}

inline mwcnp::envs::Transition random_transition(std::mt19937_64& rng, int s_dim, int a_dim) {
  return mwcnp::envs::Transition{random_vector(rng, s_dim), random_vector(rng, a_dim), random_vector(rng, s_dim),
                                 std::nullopt, false};
}

}  // namespace oracle
