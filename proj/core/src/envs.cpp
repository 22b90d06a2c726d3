#include "mwcnp/envs.hpp"

#include "mwcnp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mwcnp::envs {

std::string to_string(EnvKind kind) { return kind == EnvKind::point ? "point" : "cartpole"; }

EnvKind env_kind_from_string(const std::string& name) {
  if (name == "point") return EnvKind::point;
  if (name == "cartpole") return EnvKind::cartpole;
  throw std::invalid_argument("unknown environment '" + name + "' (expected point or cartpole)");
}

int state_dim(EnvKind kind) { return kind == EnvKind::point ? point::kStateDim : cartpole::kStateDim; }
int action_dim(EnvKind kind) { return kind == EnvKind::point ? point::kActionDim : cartpole::kActionDim; }
int default_horizon(EnvKind kind) { return kind == EnvKind::point ? point::kHorizon : cartpole::kHorizon; }
double action_limit(EnvKind kind) { return kind == EnvKind::point ? point::kActionLimit : 1.0; }
double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

void validate(const TaskSpec& task) {
  const double p = task.hidden_param;
  if (!std::isfinite(p)) throw std::invalid_argument("task hidden parameter is not finite");
  if (task.kind == EnvKind::point) {
    if (p < -std::numbers::pi || p > std::numbers::pi) {
      throw std::invalid_argument("point force direction outside [-pi, pi]");
    }
  } else {
    const double limit = deg_to_rad(cartpole::kMaxBiasDeg);
    if (p < -limit - 1e-12 || p > limit + 1e-12) throw std::invalid_argument("cartpole sensor bias outside [-8, 8] deg");
  }
}

EnvState reset(const TaskSpec& task, Rng& rng) {
  validate(task);
  EnvState state;
  if (task.kind == EnvKind::point) {
    state.true_state = Eigen::Vector2d(0.0, 0.0);
  } else {
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    state.true_state = Eigen::VectorXd(4);
    for (int i = 0; i < 4; ++i) state.true_state(i) = dist(rng);
  }
  return state;
}

EnvState reset(const TaskSpec& task, std::uint64_t seed) {
  Rng rng(seed);
  return reset(task, rng);
}

Eigen::VectorXd observe(const EnvState& state, const TaskSpec& task) {
  Eigen::VectorXd obs = state.true_state;
  if (task.kind == EnvKind::cartpole) obs(2) += task.hidden_param;
  return obs;
}

namespace {

double clip(double v, double limit) { return std::clamp(v, -limit, limit); }

StepResult step_point(const EnvState& state, const TaskSpec& task, const Eigen::VectorXd& action) {
  using namespace point;
  StepResult r;
  r.state.step = state.step + 1;
  r.state.true_state = Eigen::VectorXd(2);
  r.state.true_state(0) = state.true_state(0) + clip(action(0), kActionLimit) + kForce * std::cos(task.hidden_param);
  r.state.true_state(1) = state.true_state(1) + clip(action(1), kActionLimit) + kForce * std::sin(task.hidden_param);
  const double dx = r.state.true_state(0) - kGoalX;
  const double dy = r.state.true_state(1) - kGoalY;
  r.reward = -std::sqrt(dx * dx + dy * dy);
  r.done = r.state.step >= kHorizon;
  r.observation = observe(r.state, task);
  return r;
}

StepResult step_cartpole(const EnvState& state, const TaskSpec& task, const Eigen::VectorXd& action) {
  using namespace cartpole;
  constexpr double total_mass = kCartMass + kPoleMass;
  constexpr double polemass_length = kPoleMass * kHalfLength;

  const double x = state.true_state(0);
  const double x_dot = state.true_state(1);
  const double theta = state.true_state(2);
  const double theta_dot = state.true_state(3);

  const double force = kForceScale * clip(action(0), 1.0);
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + polemass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (kGravity * sin_t - cos_t * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

  StepResult r;
  r.state.step = state.step + 1;
  r.state.true_state = Eigen::VectorXd(4);
  r.state.true_state(0) = x + kTau * x_dot;
  r.state.true_state(1) = x_dot + kTau * x_acc;
  r.state.true_state(2) = theta + kTau * theta_dot;
  r.state.true_state(3) = theta_dot + kTau * theta_acc;

  const bool failed = std::abs(r.state.true_state(0)) > kXLimit ||
                      std::abs(r.state.true_state(2)) > deg_to_rad(kThetaLimitDeg);
  r.reward = failed ? 0.0 : 1.0;
  r.done = failed || r.state.step >= kHorizon;
  r.observation = observe(r.state, task);
  return r;
}

}  // namespace

StepResult step(const EnvState& state, const TaskSpec& task, const Eigen::VectorXd& action) {
  const int expected = action_dim(task.kind);
  if (action.size() != expected) {
    throw DimensionError(to_string(task.kind) + " action length", static_cast<std::size_t>(expected),
                         static_cast<std::size_t>(action.size()));
  }
  return task.kind == EnvKind::point ? step_point(state, task, action) : step_cartpole(state, task, action);
}

std::vector<TaskSpec> sample_tasks(EnvKind kind, std::size_t n, std::uint64_t seed, bool grid) {
  if (n == 0) throw std::invalid_argument("sample_tasks: n must be positive");
  const double lo = kind == EnvKind::point ? -std::numbers::pi : -deg_to_rad(cartpole::kMaxBiasDeg);
  const double hi = -lo;
  std::vector<TaskSpec> tasks;
  tasks.reserve(n);
  if (grid) {
    for (std::size_t i = 0; i < n; ++i) {
      double p = 0.0;
      if (kind == EnvKind::point) {
        p = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
      } else if (n == 1) {
        p = 0.0;
      } else {
        // Exact degrees first so the 1-degree grid lands on whole degrees.
        const double deg = -cartpole::kMaxBiasDeg +
                           2.0 * cartpole::kMaxBiasDeg * static_cast<double>(i) / static_cast<double>(n - 1);
        p = deg_to_rad(deg);
      }
      tasks.push_back(TaskSpec{kind, p});
    }
    return tasks;
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::size_t i = 0; i < n; ++i) tasks.push_back(TaskSpec{kind, dist(rng)});
  return tasks;
}

Episode rollout(const TaskSpec& task, const Policy& policy, int horizon, Rng& rng, bool record_reward) {
  Episode episode;
  if (horizon <= 0) return episode;
  EnvState state = reset(task, rng);
  Eigen::VectorXd obs = observe(state, task);
  episode.reserve(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    Eigen::VectorXd action = policy(obs, rng);
    StepResult r = step(state, task, action);
    Transition tr;
    tr.s = obs;
    tr.a = std::move(action);
    tr.s_next = r.observation;
    if (record_reward) tr.reward = r.reward;
    tr.done = r.done;
    episode.push_back(std::move(tr));
    if (r.done) break;
    state = std::move(r.state);
    obs = std::move(r.observation);
  }
  return episode;
}

Episode rollout(const TaskSpec& task, const Policy& policy, int horizon, std::uint64_t seed, bool record_reward) {
  Rng rng(seed);
  return rollout(task, policy, horizon, rng, record_reward);
}

double episode_return(const Episode& episode) {
  double total = 0.0;
  for (const auto& t : episode) total += t.reward.value_or(0.0);
  return total;
}

Episode strip_rewards(Episode episode) {
  for (auto& t : episode) t.reward.reset();
  return episode;
}

}  // namespace mwcnp::envs
