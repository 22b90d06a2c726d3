#pragma once

// No-reward meta-learning: a Gaussian meta-policy adapted per task with a
// learned pseudo-advantage A_psi(s, a, s') in a single reward-free gradient
// step, and meta-trained through that step with rewards from post-adaptation
// rollouts.

#include "mwcnp/envs.hpp"
#include "mwcnp/nnkit/checkpoint.hpp"
#include "mwcnp/nnkit/meta_grad.hpp"
#include "mwcnp/nnkit/mlp.hpp"
#include "mwcnp/replay.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace mwcnp::norml {

using nnkit::Matrix;
using nnkit::ParamVector;
using nnkit::Var;

enum class RolloutSource { real, hallucinated };

struct RolloutSet {
  std::vector<envs::Episode> episodes;
  std::vector<RolloutSource> sources;

  void add(envs::Episode episode, RolloutSource source = RolloutSource::real);
  std::size_t tuple_count() const;
  std::size_t count(RolloutSource source) const;
  bool reward_free() const;
  bool fully_labeled() const;
};

struct PolicyShape {
  nnkit::MlpShape mean;  // observation -> pre-squash action mean
  // When positive the mean is action_bound * tanh(net(obs)), keeping it
  // inside the environment's clip range; 0 leaves the network output as is.
  double action_bound = 0.0;

  int obs_dim() const { return mean.input_size(); }
  int action_dim() const { return mean.output_size(); }
  // mean-network parameters followed by one log-std per action dimension
  std::size_t parameter_count() const { return mean.parameter_count() + static_cast<std::size_t>(action_dim()); }
};

// theta, psi and alpha_raw, plus the shapes that give them meaning. The
// packed form [theta, psi, alpha_raw] is what the outer loop optimizes.
struct MetaParams {
  PolicyShape policy;
  nnkit::MlpShape advantage;  // concat(s, a, s') -> 1
  ParamVector theta;
  ParamVector psi;
  double alpha_raw = 0.0;  // inner step size is exp(alpha_raw)

  Eigen::Index theta_offset() const { return 0; }
  Eigen::Index psi_offset() const { return static_cast<Eigen::Index>(theta.size()); }
  Eigen::Index alpha_offset() const { return static_cast<Eigen::Index>(theta.size() + psi.size()); }
  double alpha() const;

  ParamVector pack() const;
  // Same shapes, values from a packed vector.
  MetaParams with_packed(const ParamVector& packed) const;
};

struct NetworkConfig {
  int hidden = 64;
  int depth = 2;
  nnkit::Activation activation = nnkit::Activation::tanh;
  double init_std = 0.5;
  double alpha_init = 0.01;
  // Scales the initial policy output layer so early actions stay near zero.
  double policy_output_scale = 0.1;
};

MetaParams init_meta_params(int obs_dim, int action_dim, double action_bound, const NetworkConfig& config, Rng& rng);

// Rollout tuples deduplicated and sorted into a canonical order, each unique
// tuple weighted by multiplicity / total. Reductions over this form do not
// depend on tuple order or on duplicating the whole multiset.
struct TupleBatch {
  Matrix obs;
  Matrix actions;
  Matrix next;
  Eigen::VectorXd weights;
};

// Throws std::invalid_argument if the set is empty.
TupleBatch canonical_tuples(const RolloutSet& rollouts);

// log pi(a | s) per row (N x 1). The policy block of `params` starts at `offset`.
Var log_prob(const PolicyShape& shape, const Var& params, Eigen::Index offset, const Matrix& obs,
             const Matrix& actions);
// A_psi(s, a, s') per row (N x 1).
Var advantage(const nnkit::MlpShape& shape, const Var& params, Eigen::Index offset, const Matrix& obs,
              const Matrix& actions, const Matrix& next);

// Weighted mean of log pi(a|s) * A_psi(s, a, s') over a reward-free batch,
// as a function of the packed meta-parameters.
Var inner_objective(const MetaParams& layout, const Var& packed, const TupleBatch& batch);
nnkit::InnerUpdate make_inner_update(const MetaParams& layout, const TupleBatch& batch);

Eigen::VectorXd policy_mean(const PolicyShape& shape, const ParamVector& theta, const Eigen::VectorXd& obs);
// a ~ N(mean(obs), diag(exp(log_std))^2). Clipping is left to the environment.
Eigen::VectorXd policy_sample(const PolicyShape& shape, const ParamVector& theta, const Eigen::VectorXd& obs, Rng& rng);
envs::Policy stochastic_policy(const PolicyShape& shape, const ParamVector& theta);
envs::Policy mean_policy(const PolicyShape& shape, const ParamVector& theta);

// theta' = theta + alpha * grad_theta inner_objective. Requires a non-empty,
// reward-free rollout set.
ParamVector inner_adapt(const MetaParams& params, const RolloutSet& d_train);
// Test-time fine-tuning over a (possibly mixed real/hallucinated) set: the
// same computation as inner_adapt.
ParamVector finetune(const MetaParams& params, const RolloutSet& rollouts);

Eigen::VectorXd reward_to_go(const envs::Episode& episode, double discount);
// Per-episode reward-to-go minus the per-timestep mean over the set's
// episodes. Throws if any reward is missing.
std::vector<Eigen::VectorXd> centered_advantages(const RolloutSet& d_test, double discount);
// Zero mean, unit variance over every entry across all tasks of a meta-batch.
void normalize_advantages(std::vector<std::vector<Eigen::VectorXd>>& per_task);

// -(1/M) sum over episodes and steps of log pi_theta'(a_t|s_t) * adv_t, where
// M is the episode count and `advantages` holds one vector per episode.
Var outer_loss(const PolicyShape& shape, const Var& theta_adapted, const RolloutSet& d_test,
               const std::vector<Eigen::VectorXd>& advantages);
// Convenience form using centered, unnormalized advantages of d_test alone.
Var outer_loss(const PolicyShape& shape, const Var& theta_adapted, const RolloutSet& d_test, double discount = 1.0);

// Gradient of outer_loss(inner_adapt(packed)) with respect to the packed
// meta-parameters, through the inner step unless `first_order`.
nnkit::LossAndGrad meta_gradient(const MetaParams& params, const RolloutSet& d_train, const RolloutSet& d_test,
                                 const std::vector<Eigen::VectorXd>& advantages, bool first_order);

struct MetaTrainConfig {
  int iterations = 200;
  int meta_batch = 10;
  int train_rollouts = 25;
  int test_rollouts = 10;
  int train_horizon = 0;  // 0: environment default
  int test_horizon = 0;
  double outer_lr = 1e-3;
  double alpha_lr = 0.0;  // separate Adam rate for alpha_raw; 0 keeps outer_lr
  double discount = 1.0;
  bool first_order = false;
  // D_train data from iterations at or after this fraction goes to the replay store.
  double replay_window = 0.5;
  NetworkConfig network;
  std::uint64_t seed = 0;
};

struct IterationStats {
  int iteration = 0;
  double pre_return = 0.0;   // mean D_train episode return (pi_theta)
  double post_return = 0.0;  // mean D_test episode return (pi_theta')
  double outer_loss = 0.0;
  double alpha = 0.0;
  double policy_std = 0.0;     // mean exp(log_std) of pi_theta
  double clip_fraction = 0.0;  // share of D_test action components outside the env bound
};

struct MetaTrainResult {
  MetaParams params;
  replay::ReplayStore store;
  std::vector<IterationStats> curve;
};

// Tasks are visited in reshuffled passes over `tasks`, `meta_batch` per
// iteration. The replay store's task_index is the position in `tasks`.
MetaTrainResult meta_train(envs::EnvKind kind, const std::vector<envs::TaskSpec>& tasks, const MetaTrainConfig& config,
                           const std::function<void(const IterationStats&)>& on_iteration = {});

// Sections "policy", "advantage", "alpha", plus "action_bound".
nnkit::Checkpoint to_checkpoint(const MetaParams& params);
MetaParams from_checkpoint(const nnkit::Checkpoint& ckpt);

}  // namespace mwcnp::norml
