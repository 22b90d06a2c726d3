#pragma once

// Conditional neural process over transition tuples. A shared encoder maps
// each context tuple (s, a, s') to a latent vector; the mean of those is the
// task representation r. The decoder maps (r, s_q, a_q) to a diagonal
// Gaussian over the next state.

#include "mwcnp/envs.hpp"
#include "mwcnp/nnkit/checkpoint.hpp"
#include "mwcnp/nnkit/mlp.hpp"
#include "mwcnp/norml.hpp"
#include "mwcnp/replay.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace mwcnp::cnp {

using nnkit::Matrix;
using nnkit::ParamVector;
using nnkit::Var;

inline constexpr double kSigmaFloor = 1e-4;

struct CnpConfig {
  int latent = 32;
  int hidden = 64;
  int depth = 2;
  nnkit::Activation activation = nnkit::Activation::tanh;
};

struct CnpModel {
  int state_dim = 0;
  int action_dim = 0;
  int latent = 0;
  nnkit::MlpShape encoder;  // 2S + A -> d
  nnkit::MlpShape decoder;  // d + S + A -> 2S (mu, then raw sigma)
  ParamVector params;       // encoder block, then decoder block

  Eigen::Index encoder_offset() const { return 0; }
  Eigen::Index decoder_offset() const { return static_cast<Eigen::Index>(encoder.parameter_count()); }
};

CnpModel init_model(int state_dim, int action_dim, const CnpConfig& config, Rng& rng);

struct LatentRep {
  Eigen::VectorXd r;
  int context_count = 0;
};

struct NextStateDist {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
};

// Context tuples sorted lexicographically, duplicates merged, each unique
// tuple weighted by multiplicity / total.
struct ContextBatch {
  Matrix tuples;   // u x (2S + A)
  Matrix weights;  // 1 x u
  int count = 0;
};

ContextBatch canonical_context(const std::vector<envs::Transition>& context, int state_dim, int action_dim);

// Differentiable pieces used by training and by the numeric wrappers below.
Var encode(const CnpModel& layout, const Var& params, const ContextBatch& context);  // 1 x d
// Q x 2S raw decoder output for queries given as Q x (S + A) rows.
Var decode(const CnpModel& layout, const Var& params, const Var& latent, const Matrix& queries);
Var decoded_mu(const CnpModel& layout, const Var& raw);
Var decoded_sigma(const CnpModel& layout, const Var& raw);  // softplus + floor
// Per-row sum over state dimensions of the Gaussian negative log density (Q x 1).
Var gaussian_nll(const Var& mu, const Var& sigma, const Matrix& targets);

// Throws std::invalid_argument on an empty context.
LatentRep encode_context(const CnpModel& model, const std::vector<envs::Transition>& context);
NextStateDist predict(const CnpModel& model, const LatentRep& latent, const Eigen::VectorXd& s_q,
                      const Eigen::VectorXd& a_q);
double nll_loss(const NextStateDist& dist, const Eigen::VectorXd& s_next_true);

struct TrainConfig {
  int steps = 20000;
  int queries_per_step = 16;  // queries sharing one sampled context
  int tasks_per_step = 4;
  int k_max = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  // Ablation: the decoder sees a zero latent instead of the encoded context.
  bool context_blind = false;
};

struct TrainStats {
  int step = 0;
  double nll = 0.0;  // mean per-query NLL of this step's minibatch
};

// Adam on (encoder, decoder) jointly against the mean NLL of sampled queries.
// Throws NonFiniteError naming the step on a non-finite loss.
CnpModel train(CnpModel model, const replay::ReplayStore& store, const TrainConfig& config,
               const std::function<void(const TrainStats&)>& on_step = {});

enum class HallucinationMode { sample, mean };

// Steps the model instead of the environment for exactly `horizon` steps
// from `s0`. Actions come from `policy` with `policy_rng`; next states are
// drawn from the predicted Gaussian with `state_rng` (or set to its mean).
envs::Episode hallucinate_rollout(const CnpModel& model, const LatentRep& latent, const envs::Policy& policy,
                                  const Eigen::VectorXd& s0, int horizon, Rng& policy_rng, Rng& state_rng,
                                  HallucinationMode mode = HallucinationMode::sample);
envs::Episode hallucinate_rollout(const CnpModel& model, const LatentRep& latent, const envs::Policy& policy,
                                  const Eigen::VectorXd& s0, int horizon, Rng& rng,
                                  HallucinationMode mode = HallucinationMode::sample);

struct AdaptOptions {
  // Real tuples used for conditioning and fine-tuning; 0 keeps the whole episode.
  int conditioning_tuples = 0;
  HallucinationMode mode = HallucinationMode::sample;
};

struct AdaptResult {
  ParamVector theta;
  norml::RolloutSet rollouts;
  LatentRep latent;
};

// Fine-tunes on `real` (reward-free) plus `n_hallucinated` model rollouts
// that start from real's first state and match its length. Hallucinated
// rollout k draws actions from policy_seeds[k] when given.
AdaptResult adapt_with_model(const CnpModel& model, const norml::MetaParams& meta, const envs::Episode& real,
                             int n_hallucinated, Rng& rng, const AdaptOptions& options = {},
                             const std::vector<std::uint64_t>& policy_seeds = {});

// Collects one real rollout with the meta-policy, then adapt_with_model.
AdaptResult test_time_adapt(const CnpModel& model, const norml::MetaParams& meta, const envs::TaskSpec& task,
                            int n_hallucinated, Rng& rng, const AdaptOptions& options = {});

// Header fields S, A, d; sections "encoder", "decoder".
nnkit::Checkpoint to_checkpoint(const CnpModel& model);
CnpModel from_checkpoint(const nnkit::Checkpoint& ckpt);

}  // namespace mwcnp::cnp
