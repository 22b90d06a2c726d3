#pragma once

#include "mwcnp/nnkit/param_vector.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mwcnp::envs {

enum class EnvKind { point, cartpole };

std::string to_string(EnvKind kind);
// Throws std::invalid_argument on an unknown name.
EnvKind env_kind_from_string(const std::string& name);

// One (s, a, s') tuple. `a` is the action as sampled by the policy, before
// the environment clips it. `reward` is only set on reward-visible rollouts.
struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  Eigen::VectorXd s_next;
  std::optional<double> reward;
  bool done = false;
};

using Episode = std::vector<Transition>;

// A task is one setting of the hidden dynamics parameter: the force-field
// direction (radians) for the point agent, the angle-sensor bias (radians)
// for cartpole. Only the dynamics and the evaluation logger read it.
struct TaskSpec {
  EnvKind kind = EnvKind::point;
  double hidden_param = 0.0;
};

struct EnvState {
  Eigen::VectorXd true_state;  // point: (x, y); cartpole: (x, x_dot, theta, theta_dot)
  int step = 0;
};

struct StepResult {
  EnvState state;
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool done = false;
};

namespace point {
inline constexpr int kStateDim = 2;
inline constexpr int kActionDim = 2;
inline constexpr double kForce = 0.05;
inline constexpr double kActionLimit = 0.1;
inline constexpr int kHorizon = 10;
inline constexpr double kGoalX = 1.0;
inline constexpr double kGoalY = 0.0;
}  // namespace point

namespace cartpole {
inline constexpr int kStateDim = 4;
inline constexpr int kActionDim = 1;
inline constexpr double kGravity = 9.8;
inline constexpr double kCartMass = 1.0;
inline constexpr double kPoleMass = 0.1;
inline constexpr double kHalfLength = 0.5;
inline constexpr double kTau = 0.02;
inline constexpr double kForceScale = 10.0;
inline constexpr double kXLimit = 2.4;
inline constexpr double kThetaLimitDeg = 12.0;
inline constexpr int kHorizon = 500;
inline constexpr double kMaxBiasDeg = 8.0;
}  // namespace cartpole

int state_dim(EnvKind kind);
int action_dim(EnvKind kind);
int default_horizon(EnvKind kind);
double action_limit(EnvKind kind);
double deg_to_rad(double deg);

// Throws std::invalid_argument if the hidden parameter is outside its range.
void validate(const TaskSpec& task);

EnvState reset(const TaskSpec& task, std::uint64_t seed);
EnvState reset(const TaskSpec& task, Rng& rng);
// What the agent sees. Cartpole adds the sensor bias to the angle only.
Eigen::VectorXd observe(const EnvState& state, const TaskSpec& task);
// Throws DimensionError if the action has the wrong length.
StepResult step(const EnvState& state, const TaskSpec& task, const Eigen::VectorXd& action);

// Uniform over the task range, or an evenly spaced grid when `grid` is set.
// Point grids are periodic (-pi + 2 pi i / n); cartpole grids include both
// endpoints (n = 17 gives -8, -7, ..., +8 degrees).
std::vector<TaskSpec> sample_tasks(EnvKind kind, std::size_t n, std::uint64_t seed, bool grid = false);

// Maps an observation to an action. May consume randomness from `rng`.
using Policy = std::function<Eigen::VectorXd(const Eigen::VectorXd& observation, Rng& rng)>;

// Runs one episode from a fresh reset, stopping at `done` or after `horizon`
// steps. The reset and the policy share the rng seeded from `seed`.
Episode rollout(const TaskSpec& task, const Policy& policy, int horizon, std::uint64_t seed, bool record_reward);
Episode rollout(const TaskSpec& task, const Policy& policy, int horizon, Rng& rng, bool record_reward);

double episode_return(const Episode& episode);
// Copy with every reward cleared.
Episode strip_rewards(Episode episode);

}  // namespace mwcnp::envs
