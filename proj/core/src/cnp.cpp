#include "mwcnp/cnp.hpp"

#include "mwcnp/errors.hpp"
#include "mwcnp/nnkit/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace mwcnp::cnp {

namespace {

Eigen::VectorXd flat_tuple(const envs::Transition& t) {
  Eigen::VectorXd v(t.s.size() + t.a.size() + t.s_next.size());
  v << t.s, t.a, t.s_next;
  return v;
}

bool lex_less(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) < y(i)) return true;
    if (y(i) < x(i)) return false;
  }
  return false;
}

void check_tuple(const envs::Transition& t, int s_dim, int a_dim) {
  if (t.s.size() != s_dim) throw DimensionError("context state length", s_dim, t.s.size());
  if (t.s_next.size() != s_dim) throw DimensionError("context next-state length", s_dim, t.s_next.size());
  if (t.a.size() != a_dim) throw DimensionError("context action length", a_dim, t.a.size());
}

Matrix query_row(const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
  Matrix q(1, s.size() + a.size());
  q << s.transpose(), a.transpose();
  return q;
}

}  // namespace

CnpModel init_model(int state_dim, int action_dim, const CnpConfig& config, Rng& rng) {
  if (state_dim <= 0 || action_dim <= 0 || config.latent <= 0) {
    throw std::invalid_argument("cnp dimensions must be positive");
  }
  CnpModel m;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  m.latent = config.latent;
  m.encoder = nnkit::make_shape(2 * state_dim + action_dim, config.hidden, config.depth, config.latent,
                                config.activation);
  m.decoder = nnkit::make_shape(config.latent + state_dim + action_dim, config.hidden, config.depth, 2 * state_dim,
                                config.activation);
  const ParamVector enc = nnkit::init_params(m.encoder, rng);
  const ParamVector dec = nnkit::init_params(m.decoder, rng);
  m.params = nnkit::concat({&enc, &dec});
  return m;
}

ContextBatch canonical_context(const std::vector<envs::Transition>& context, int state_dim, int action_dim) {
  if (context.empty()) throw std::invalid_argument("context must contain at least one transition");
  std::vector<Eigen::VectorXd> rows;
  rows.reserve(context.size());
  for (const auto& t : context) {
    check_tuple(t, state_dim, action_dim);
    rows.push_back(flat_tuple(t));
  }
  std::sort(rows.begin(), rows.end(), lex_less);

  std::vector<std::size_t> first;
  std::vector<double> counts;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!first.empty() && rows[first.back()] == rows[i]) {
      counts.back() += 1.0;
    } else {
      first.push_back(i);
      counts.push_back(1.0);
    }
  }

  ContextBatch batch;
  const auto u = static_cast<Eigen::Index>(first.size());
  batch.tuples.resize(u, 2 * state_dim + action_dim);
  batch.weights.resize(1, u);
  batch.count = static_cast<int>(context.size());
  for (Eigen::Index i = 0; i < u; ++i) {
    batch.tuples.row(i) = rows[first[static_cast<std::size_t>(i)]].transpose();
    batch.weights(0, i) = counts[static_cast<std::size_t>(i)] / static_cast<double>(context.size());
  }
  return batch;
}

Var encode(const CnpModel& layout, const Var& params, const ContextBatch& context) {
  const Var per_tuple = nnkit::forward(layout.encoder, params, layout.encoder_offset(), Var::constant(context.tuples));
  return nnkit::matmul(Var::constant(context.weights), per_tuple);
}

Var decode(const CnpModel& layout, const Var& params, const Var& latent, const Matrix& queries) {
  if (queries.cols() != layout.state_dim + layout.action_dim) {
    throw DimensionError("query width", layout.state_dim + layout.action_dim, queries.cols());
  }
  const Var input = nnkit::hconcat({nnkit::broadcast_rows(latent, queries.rows()), Var::constant(queries)});
  return nnkit::forward(layout.decoder, params, layout.decoder_offset(), input);
}

Var decoded_mu(const CnpModel& layout, const Var& raw) { return nnkit::slice(raw, 0, 0, raw.rows(), layout.state_dim); }

Var decoded_sigma(const CnpModel& layout, const Var& raw) {
  return nnkit::add_scalar(nnkit::softplus(nnkit::slice(raw, 0, layout.state_dim, raw.rows(), layout.state_dim)),
                           kSigmaFloor);
}

Var gaussian_nll(const Var& mu, const Var& sigma, const Matrix& targets) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Var z = nnkit::div(nnkit::sub(Var::constant(targets), mu), sigma);
  const Var per_dim = nnkit::add_scalar(nnkit::add(nnkit::log(sigma), nnkit::scale(nnkit::square(z), 0.5)), half_log_2pi);
  return nnkit::row_sum(per_dim);
}

LatentRep encode_context(const CnpModel& model, const std::vector<envs::Transition>& context) {
  nnkit::NoGradGuard guard;
  const ContextBatch batch = canonical_context(context, model.state_dim, model.action_dim);
  const Var r = encode(model, Var::constant(model.params.values), batch);
  return LatentRep{r.value().row(0).transpose(), batch.count};
}

NextStateDist predict(const CnpModel& model, const LatentRep& latent, const Eigen::VectorXd& s_q,
                      const Eigen::VectorXd& a_q) {
  if (latent.r.size() != model.latent) throw DimensionError("latent length", model.latent, latent.r.size());
  if (s_q.size() != model.state_dim) throw DimensionError("query state length", model.state_dim, s_q.size());
  if (a_q.size() != model.action_dim) throw DimensionError("query action length", model.action_dim, a_q.size());
  nnkit::NoGradGuard guard;
  const Var params = Var::constant(model.params.values);
  const Var raw = decode(model, params, Var::constant(latent.r.transpose()), query_row(s_q, a_q));
  return NextStateDist{decoded_mu(model, raw).value().row(0).transpose(),
                       decoded_sigma(model, raw).value().row(0).transpose()};
}

double nll_loss(const NextStateDist& dist, const Eigen::VectorXd& s_next_true) {
  if (s_next_true.size() != dist.mu.size()) throw DimensionError("target length", dist.mu.size(), s_next_true.size());
  nnkit::NoGradGuard guard;
  return gaussian_nll(Var::constant(dist.mu.transpose()), Var::constant(dist.sigma.transpose()),
                      s_next_true.transpose())
      .item();
}

CnpModel train(CnpModel model, const replay::ReplayStore& store, const TrainConfig& config,
               const std::function<void(const TrainStats&)>& on_step) {
  if (store.batches.empty()) throw std::invalid_argument("replay store is empty");
  if (store.state_dim != model.state_dim) throw DimensionError("replay state dim", model.state_dim, store.state_dim);
  if (store.action_dim != model.action_dim) throw DimensionError("replay action dim", model.action_dim, store.action_dim);
  if (config.queries_per_step < 1 || config.tasks_per_step < 1 || config.k_max < 1) {
    throw std::invalid_argument("cnp training sizes must be positive");
  }

  Rng rng(config.seed);
  nnkit::AdamState adam = nnkit::AdamState::create(model.params.size(), nnkit::AdamConfig{config.lr});
  const int sq = model.state_dim + model.action_dim;

  for (int step = 0; step < config.steps; ++step) {
    std::vector<ContextBatch> contexts;
    std::vector<Matrix> queries;
    std::vector<Matrix> targets;
    for (int t = 0; t < config.tasks_per_step; ++t) {
      const replay::TaskBatch& batch = replay::sample_task_batch(store, rng);
      const replay::ContextQuery cq = replay::sample_context_and_query(batch, config.k_max, rng);
      contexts.push_back(canonical_context(cq.context, model.state_dim, model.action_dim));
      Matrix q(config.queries_per_step, sq);
      Matrix y(config.queries_per_step, model.state_dim);
      std::uniform_int_distribution<std::size_t> pick(0, batch.transitions.size() - 1);
      for (int i = 0; i < config.queries_per_step; ++i) {
        const envs::Transition& tr = i == 0 ? cq.query : batch.transitions[pick(rng)];
        q.row(i) = query_row(tr.s, tr.a);
        y.row(i) = tr.s_next.transpose();
      }
      queries.push_back(std::move(q));
      targets.push_back(std::move(y));
    }

    const auto loss_fn = [&](const Var& params) {
      Var total;
      for (std::size_t t = 0; t < contexts.size(); ++t) {
        const Var r = config.context_blind ? Var::constant(Matrix::Zero(1, model.latent))
                                           : encode(model, params, contexts[t]);
        const Var raw = decode(model, params, r, queries[t]);
        const Var nll = nnkit::mean(gaussian_nll(decoded_mu(model, raw), decoded_sigma(model, raw), targets[t]));
        total = t == 0 ? nll : nnkit::add(total, nll);
      }
      return nnkit::scale(total, 1.0 / static_cast<double>(contexts.size()));
    };

    nnkit::LossAndGrad lg;
    try {
      lg = nnkit::grad(loss_fn, model.params);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("cnp step " + std::to_string(step) + " " + e.stage(), e.value());
    }
    if (!lg.grad.all_finite()) throw NonFiniteError("cnp step " + std::to_string(step) + " gradient", lg.loss);
    nnkit::adam_update(adam, model.params, lg.grad);
    if (on_step) on_step(TrainStats{step, lg.loss});
  }
  return model;
}

envs::Episode hallucinate_rollout(const CnpModel& model, const LatentRep& latent, const envs::Policy& policy,
                                  const Eigen::VectorXd& s0, int horizon, Rng& policy_rng, Rng& state_rng,
                                  HallucinationMode mode) {
  if (s0.size() != model.state_dim) throw DimensionError("start state length", model.state_dim, s0.size());
  if (horizon < 0) throw std::invalid_argument("horizon must be non-negative");
  std::normal_distribution<double> normal(0.0, 1.0);
  envs::Episode episode;
  episode.reserve(static_cast<std::size_t>(horizon));
  Eigen::VectorXd s = s0;
  for (int k = 0; k < horizon; ++k) {
    const Eigen::VectorXd a = policy(s, policy_rng);
    const NextStateDist d = predict(model, latent, s, a);
    Eigen::VectorXd next = d.mu;
    if (mode == HallucinationMode::sample) {
      for (Eigen::Index i = 0; i < next.size(); ++i) next(i) += d.sigma(i) * normal(state_rng);
    }
    if (!next.allFinite()) throw NonFiniteError("hallucination step " + std::to_string(k), next.sum());
    episode.push_back(envs::Transition{s, a, next, std::nullopt, false});
    s = std::move(next);
  }
  return episode;
}

envs::Episode hallucinate_rollout(const CnpModel& model, const LatentRep& latent, const envs::Policy& policy,
                                  const Eigen::VectorXd& s0, int horizon, Rng& rng, HallucinationMode mode) {
  Rng state_rng(rng());
  return hallucinate_rollout(model, latent, policy, s0, horizon, rng, state_rng, mode);
}

AdaptResult adapt_with_model(const CnpModel& model, const norml::MetaParams& meta, const envs::Episode& real,
                             int n_hallucinated, Rng& rng, const AdaptOptions& options,
                             const std::vector<std::uint64_t>& policy_seeds) {
  if (real.empty()) throw std::invalid_argument("conditioning rollout is empty");
  if (n_hallucinated < 0) throw std::invalid_argument("hallucinated rollout count must be non-negative");
  envs::Episode conditioning = real;
  if (options.conditioning_tuples > 0 && static_cast<std::size_t>(options.conditioning_tuples) < conditioning.size()) {
    conditioning.resize(static_cast<std::size_t>(options.conditioning_tuples));
  }
  for (const auto& t : conditioning) {
    if (t.reward.has_value()) throw std::invalid_argument("conditioning rollout must be reward-free");
  }

  AdaptResult out;
  out.latent = encode_context(model, conditioning);
  out.rollouts.add(conditioning, norml::RolloutSource::real);
  const envs::Policy policy = norml::stochastic_policy(meta.policy, meta.theta);
  const int horizon = static_cast<int>(conditioning.size());
  for (int k = 0; k < n_hallucinated; ++k) {
    Rng state_rng(rng());
    Rng policy_rng = static_cast<std::size_t>(k) < policy_seeds.size() ? Rng(policy_seeds[static_cast<std::size_t>(k)])
                                                                        : Rng(rng());
    out.rollouts.add(hallucinate_rollout(model, out.latent, policy, conditioning.front().s, horizon, policy_rng,
                                         state_rng, options.mode),
                     norml::RolloutSource::hallucinated);
  }
  out.theta = norml::finetune(meta, out.rollouts);
  return out;
}

AdaptResult test_time_adapt(const CnpModel& model, const norml::MetaParams& meta, const envs::TaskSpec& task,
                            int n_hallucinated, Rng& rng, const AdaptOptions& options) {
  const envs::Policy policy = norml::stochastic_policy(meta.policy, meta.theta);
  const envs::Episode real = envs::rollout(task, policy, envs::default_horizon(task.kind), rng, false);
  return adapt_with_model(model, meta, real, n_hallucinated, rng, options);
}

nnkit::Checkpoint to_checkpoint(const CnpModel& model) {
  nnkit::Checkpoint ckpt;
  ckpt.fields = {{"state_dim", model.state_dim}, {"action_dim", model.action_dim}, {"latent", model.latent}};
  const auto enc_n = static_cast<Eigen::Index>(model.encoder.parameter_count());
  const auto dec_n = static_cast<Eigen::Index>(model.decoder.parameter_count());
  ckpt.sections.push_back({"encoder", model.encoder, ParamVector(model.params.values.segment(0, enc_n))});
  ckpt.sections.push_back({"decoder", model.decoder, ParamVector(model.params.values.segment(enc_n, dec_n))});
  return ckpt;
}

CnpModel from_checkpoint(const nnkit::Checkpoint& ckpt) {
  const auto need = [&](const char* name) {
    const auto v = ckpt.field(name);
    if (!v) throw nnkit::CheckpointError(std::string("missing field ") + name);
    return static_cast<int>(*v);
  };
  CnpModel m;
  m.state_dim = need("state_dim");
  m.action_dim = need("action_dim");
  m.latent = need("latent");
  const auto& enc = ckpt.section("encoder");
  const auto& dec = ckpt.section("decoder");
  m.encoder = enc.shape;
  m.decoder = dec.shape;
  if (m.encoder.input_size() != 2 * m.state_dim + m.action_dim || m.encoder.output_size() != m.latent ||
      m.decoder.input_size() != m.latent + m.state_dim + m.action_dim || m.decoder.output_size() != 2 * m.state_dim) {
    throw nnkit::CheckpointError("cnp section shapes disagree with header");
  }
  if (enc.params.size() != m.encoder.parameter_count() || dec.params.size() != m.decoder.parameter_count()) {
    throw nnkit::CheckpointError("cnp parameter count mismatch");
  }
  m.params = nnkit::concat({&enc.params, &dec.params});
  return m;
}

}  // namespace mwcnp::cnp
