#include "mwcnp/norml.hpp"

#include "mwcnp/errors.hpp"
#include "mwcnp/nnkit/adam.hpp"
#include "mwcnp/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace mwcnp::norml {

void RolloutSet::add(envs::Episode episode, RolloutSource source) {
  episodes.push_back(std::move(episode));
  sources.push_back(source);
}

std::size_t RolloutSet::tuple_count() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.size();
  return n;
}

std::size_t RolloutSet::count(RolloutSource source) const {
  return static_cast<std::size_t>(std::count(sources.begin(), sources.end(), source));
}

bool RolloutSet::reward_free() const {
  for (const auto& e : episodes) {
    for (const auto& t : e) {
      if (t.reward.has_value()) return false;
    }
  }
  return true;
}

bool RolloutSet::fully_labeled() const {
  for (const auto& e : episodes) {
    for (const auto& t : e) {
      if (!t.reward.has_value()) return false;
    }
  }
  return true;
}

double MetaParams::alpha() const { return std::exp(alpha_raw); }

ParamVector MetaParams::pack() const {
  ParamVector alpha_block(Eigen::VectorXd::Constant(1, alpha_raw));
  return nnkit::concat({&theta, &psi, &alpha_block});
}

MetaParams MetaParams::with_packed(const ParamVector& packed) const {
  const auto expected = theta.size() + psi.size() + 1;
  if (packed.size() != expected) throw DimensionError("packed meta-parameter length", expected, packed.size());
  MetaParams out = *this;
  out.theta.values = packed.values.segment(theta_offset(), static_cast<Eigen::Index>(theta.size()));
  out.psi.values = packed.values.segment(psi_offset(), static_cast<Eigen::Index>(psi.size()));
  out.alpha_raw = packed.values(alpha_offset());
  return out;
}

MetaParams init_meta_params(int obs_dim, int action_dim, double action_bound, const NetworkConfig& config, Rng& rng) {
  MetaParams p;
  p.policy.action_bound = action_bound;
  p.policy.mean = nnkit::make_shape(obs_dim, config.hidden, config.depth, action_dim, config.activation);
  p.advantage = nnkit::make_shape(2 * obs_dim + action_dim, config.hidden, config.depth, 1, config.activation);

  ParamVector mean_params = nnkit::init_params(p.policy.mean, rng);
  // Shrink the output layer weights.
  const auto& sizes = p.policy.mean.layer_sizes;
  const Eigen::Index last_w = static_cast<Eigen::Index>(sizes[sizes.size() - 2]) * sizes.back();
  const Eigen::Index last_off =
      static_cast<Eigen::Index>(p.policy.mean.parameter_count()) - last_w - sizes.back();
  mean_params.values.segment(last_off, last_w) *= config.policy_output_scale;

  ParamVector log_std(Eigen::VectorXd::Constant(action_dim, std::log(config.init_std)));
  p.theta = nnkit::concat({&mean_params, &log_std});
  p.psi = nnkit::init_params(p.advantage, rng);
  p.alpha_raw = std::log(config.alpha_init);
  return p;
}

namespace {

bool tuple_less(const envs::Transition& x, const envs::Transition& y) {
  auto cmp = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  };
  if (cmp(x.s, y.s)) return true;
  if (cmp(y.s, x.s)) return false;
  if (cmp(x.a, y.a)) return true;
  if (cmp(y.a, x.a)) return false;
  return cmp(x.s_next, y.s_next);
}

bool tuple_equal(const envs::Transition& x, const envs::Transition& y) {
  return x.s == y.s && x.a == y.a && x.s_next == y.s_next;
}

}  // namespace

TupleBatch canonical_tuples(const RolloutSet& rollouts) {
  std::vector<const envs::Transition*> all;
  all.reserve(rollouts.tuple_count());
  for (const auto& e : rollouts.episodes) {
    for (const auto& t : e) all.push_back(&t);
  }
  if (all.empty()) throw std::invalid_argument("rollout set contains no transitions");
  std::stable_sort(all.begin(), all.end(), [](const auto* x, const auto* y) { return tuple_less(*x, *y); });

  std::vector<const envs::Transition*> unique;
  std::vector<double> counts;
  for (const auto* t : all) {
    if (!unique.empty() && tuple_equal(*unique.back(), *t)) {
      counts.back() += 1.0;
    } else {
      unique.push_back(t);
      counts.push_back(1.0);
    }
  }

  const auto n = static_cast<Eigen::Index>(unique.size());
  const auto s_dim = unique.front()->s.size();
  const auto a_dim = unique.front()->a.size();
  const double total = static_cast<double>(all.size());
  TupleBatch batch;
  batch.obs.resize(n, s_dim);
  batch.actions.resize(n, a_dim);
  batch.next.resize(n, s_dim);
  batch.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = *unique[static_cast<std::size_t>(i)];
    if (t.s.size() != s_dim || t.s_next.size() != s_dim) {
      throw DimensionError("rollout state length", static_cast<std::size_t>(s_dim), static_cast<std::size_t>(t.s.size()));
    }
    if (t.a.size() != a_dim) {
      throw DimensionError("rollout action length", static_cast<std::size_t>(a_dim), static_cast<std::size_t>(t.a.size()));
    }
    batch.obs.row(i) = t.s.transpose();
    batch.actions.row(i) = t.a.transpose();
    batch.next.row(i) = t.s_next.transpose();
    batch.weights(i) = counts[static_cast<std::size_t>(i)] / total;
  }
  return batch;
}

namespace {

Var mean_actions(const PolicyShape& shape, const Var& params, Eigen::Index offset, const Matrix& obs) {
  Var net = nnkit::forward(shape.mean, params, offset, Var::constant(obs));
  if (shape.action_bound > 0.0) return scale(tanh(net), shape.action_bound);
  return net;
}

}  // namespace

Var log_prob(const PolicyShape& shape, const Var& params, Eigen::Index offset, const Matrix& obs,
             const Matrix& actions) {
  const Eigen::Index n = obs.rows();
  const Eigen::Index a_dim = shape.action_dim();
  if (actions.cols() != a_dim) {
    throw DimensionError("policy action width", static_cast<std::size_t>(a_dim), static_cast<std::size_t>(actions.cols()));
  }
  Var mu = mean_actions(shape, params, offset, obs);
  const auto std_offset = offset + static_cast<Eigen::Index>(shape.mean.parameter_count());
  Var log_std = reshape(slice(params, std_offset, 0, a_dim, 1), 1, a_dim);
  Var log_std_rows = broadcast_rows(log_std, n);
  Var z = mul(sub(Var::constant(actions), mu), exp(neg(log_std_rows)));
  Var per_dim = sub(scale(square(z), -0.5), log_std_rows);
  return add_scalar(row_sum(per_dim), -0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(a_dim));
}

Var advantage(const nnkit::MlpShape& shape, const Var& params, Eigen::Index offset, const Matrix& obs,
              const Matrix& actions, const Matrix& next) {
  Matrix input(obs.rows(), obs.cols() + actions.cols() + next.cols());
  input << obs, actions, next;
  return nnkit::forward(shape, params, offset, Var::constant(std::move(input)));
}

Var inner_objective(const MetaParams& layout, const Var& packed, const TupleBatch& batch) {
  Var lp = log_prob(layout.policy, packed, layout.theta_offset(), batch.obs, batch.actions);
  Var adv = advantage(layout.advantage, packed, layout.psi_offset(), batch.obs, batch.actions, batch.next);
  return sum(mul(mul(lp, adv), Var::constant(batch.weights)));
}

nnkit::InnerUpdate make_inner_update(const MetaParams& layout, const TupleBatch& batch) {
  nnkit::InnerUpdate update;
  update.objective = [layout, &batch](const Var& packed) { return inner_objective(layout, packed, batch); };
  const Eigen::Index alpha_off = layout.alpha_offset();
  update.step_size = [alpha_off](const Var& packed) { return exp(slice(packed, alpha_off, 0, 1, 1)); };
  update.offset = layout.theta_offset();
  update.length = static_cast<Eigen::Index>(layout.theta.size());
  return update;
}

namespace {

void check_theta(const PolicyShape& shape, const ParamVector& theta) {
  if (theta.size() != shape.parameter_count()) {
    throw DimensionError("policy parameter length", shape.parameter_count(), theta.size());
  }
}

}  // namespace

Eigen::VectorXd policy_mean(const PolicyShape& shape, const ParamVector& theta, const Eigen::VectorXd& obs) {
  check_theta(shape, theta);
  if (obs.size() != shape.obs_dim()) {
    throw DimensionError("policy observation length", static_cast<std::size_t>(shape.obs_dim()),
                         static_cast<std::size_t>(obs.size()));
  }
  nnkit::NoGradGuard no_grad;
  Var out = mean_actions(shape, Var::constant(theta.values), 0, obs.transpose());
  return out.value().row(0).transpose();
}

Eigen::VectorXd policy_sample(const PolicyShape& shape, const ParamVector& theta, const Eigen::VectorXd& obs, Rng& rng) {
  Eigen::VectorXd action = policy_mean(shape, theta, obs);
  const auto std_offset = static_cast<Eigen::Index>(shape.mean.parameter_count());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < action.size(); ++i) action(i) += std::exp(theta.values(std_offset + i)) * normal(rng);
  return action;
}

envs::Policy stochastic_policy(const PolicyShape& shape, const ParamVector& theta) {
  check_theta(shape, theta);
  return [shape, theta](const Eigen::VectorXd& obs, Rng& rng) { return policy_sample(shape, theta, obs, rng); };
}

envs::Policy mean_policy(const PolicyShape& shape, const ParamVector& theta) {
  check_theta(shape, theta);
  return [shape, theta](const Eigen::VectorXd& obs, Rng&) { return policy_mean(shape, theta, obs); };
}

ParamVector inner_adapt(const MetaParams& params, const RolloutSet& d_train) {
  if (!d_train.reward_free()) throw std::invalid_argument("inner adaptation data must be reward-free");
  const TupleBatch batch = canonical_tuples(d_train);
  const nnkit::InnerUpdate update = make_inner_update(params, batch);
  Var packed = Var::parameter(params.pack().values);
  Var adapted = nnkit::apply_update(update, packed, false);
  return ParamVector(adapted.value().col(0));
}

ParamVector finetune(const MetaParams& params, const RolloutSet& rollouts) { return inner_adapt(params, rollouts); }

Eigen::VectorXd reward_to_go(const envs::Episode& episode, double discount) {
  const auto n = static_cast<Eigen::Index>(episode.size());
  Eigen::VectorXd out(n);
  double acc = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const auto& r = episode[static_cast<std::size_t>(t)].reward;
    if (!r.has_value()) throw std::invalid_argument("outer-loop rollouts must carry rewards");
    acc = *r + discount * acc;
    out(t) = acc;
  }
  return out;
}

std::vector<Eigen::VectorXd> centered_advantages(const RolloutSet& d_test, double discount) {
  std::vector<Eigen::VectorXd> rtg;
  rtg.reserve(d_test.episodes.size());
  Eigen::Index longest = 0;
  for (const auto& e : d_test.episodes) {
    rtg.push_back(reward_to_go(e, discount));
    longest = std::max(longest, rtg.back().size());
  }
  Eigen::VectorXd baseline = Eigen::VectorXd::Zero(longest);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(longest);
  for (const auto& v : rtg) {
    for (Eigen::Index t = 0; t < v.size(); ++t) {
      baseline(t) += v(t);
      counts(t) += 1.0;
    }
  }
  for (Eigen::Index t = 0; t < longest; ++t) baseline(t) /= counts(t);
  for (auto& v : rtg) {
    for (Eigen::Index t = 0; t < v.size(); ++t) v(t) -= baseline(t);
  }
  return rtg;
}

void normalize_advantages(std::vector<std::vector<Eigen::VectorXd>>& per_task) {
  double sum_v = 0.0;
  double n = 0.0;
  for (const auto& task : per_task) {
    for (const auto& v : task) {
      for (Eigen::Index i = 0; i < v.size(); ++i) sum_v += v(i);
      n += static_cast<double>(v.size());
    }
  }
  if (n == 0.0) return;
  const double m = sum_v / n;
  double sq = 0.0;
  for (const auto& task : per_task) {
    for (const auto& v : task) {
      for (Eigen::Index i = 0; i < v.size(); ++i) sq += (v(i) - m) * (v(i) - m);
    }
  }
  const double sd = std::sqrt(sq / n);
  const double inv = sd > 1e-8 ? 1.0 / sd : 0.0;
  for (auto& task : per_task) {
    for (auto& v : task) v = ((v.array() - m) * inv).matrix();
  }
}

Var outer_loss(const PolicyShape& shape, const Var& theta_adapted, const RolloutSet& d_test,
               const std::vector<Eigen::VectorXd>& advantages) {
  if (d_test.episodes.empty()) throw std::invalid_argument("outer loss needs at least one episode");
  if (!d_test.fully_labeled()) throw std::invalid_argument("outer-loop rollouts must carry rewards");
  if (advantages.size() != d_test.episodes.size()) {
    throw DimensionError("advantage episode count", d_test.episodes.size(), advantages.size());
  }
  const auto n = static_cast<Eigen::Index>(d_test.tuple_count());
  Matrix obs(n, shape.obs_dim());
  Matrix actions(n, shape.action_dim());
  Eigen::VectorXd weights(n);
  Eigen::Index row = 0;
  for (std::size_t e = 0; e < d_test.episodes.size(); ++e) {
    const auto& ep = d_test.episodes[e];
    if (static_cast<std::size_t>(advantages[e].size()) != ep.size()) {
      throw DimensionError("advantage vector length", ep.size(), static_cast<std::size_t>(advantages[e].size()));
    }
    for (std::size_t t = 0; t < ep.size(); ++t, ++row) {
      obs.row(row) = ep[t].s.transpose();
      actions.row(row) = ep[t].a.transpose();
      weights(row) = advantages[e](static_cast<Eigen::Index>(t));
    }
  }
  Var lp = log_prob(shape, theta_adapted, 0, obs, actions);
  const double m = static_cast<double>(d_test.episodes.size());
  return scale(sum(mul(lp, Var::constant(weights))), -1.0 / m);
}

Var outer_loss(const PolicyShape& shape, const Var& theta_adapted, const RolloutSet& d_test, double discount) {
  return outer_loss(shape, theta_adapted, d_test, centered_advantages(d_test, discount));
}

nnkit::LossAndGrad meta_gradient(const MetaParams& params, const RolloutSet& d_train, const RolloutSet& d_test,
                                 const std::vector<Eigen::VectorXd>& advantages, bool first_order) {
  if (!d_train.reward_free()) throw std::invalid_argument("inner adaptation data must be reward-free");
  const TupleBatch batch = canonical_tuples(d_train);
  const nnkit::InnerUpdate update = make_inner_update(params, batch);
  const PolicyShape shape = params.policy;
  auto meta_loss = [&shape, &d_test, &advantages](const Var& adapted, const Var&) {
    return outer_loss(shape, adapted, d_test, advantages);
  };
  return nnkit::grad_through_update(meta_loss, update, params.pack(), first_order);
}

MetaTrainResult meta_train(envs::EnvKind kind, const std::vector<envs::TaskSpec>& tasks, const MetaTrainConfig& config,
                           const std::function<void(const IterationStats&)>& on_iteration) {
  if (config.iterations < 0 || config.meta_batch <= 0 || config.train_rollouts <= 0 || config.test_rollouts <= 0) {
    throw std::invalid_argument("meta_train: counts must be positive");
  }
  if (tasks.empty()) throw std::invalid_argument("meta_train: empty task list");

  Rng init_rng(derive_seed(config.seed, {0}));
  MetaTrainResult result;
  result.params = init_meta_params(envs::state_dim(kind), envs::action_dim(kind), envs::action_limit(kind),
                                   config.network, init_rng);
  result.store = replay::ReplayStore::create(kind, config.seed);
  if (config.iterations == 0) return result;

  const int train_h = config.train_horizon > 0 ? config.train_horizon : envs::default_horizon(kind);
  const int test_h = config.test_horizon > 0 ? config.test_horizon : envs::default_horizon(kind);
  const long window = std::lround(static_cast<double>(config.iterations) * config.replay_window);
  const int replay_start = config.iterations - static_cast<int>(window);

  ParamVector packed = result.params.pack();
  nnkit::AdamState adam = nnkit::AdamState::create(packed.size(), nnkit::AdamConfig{config.outer_lr});
  nnkit::AdamState alpha_adam = nnkit::AdamState::create(1, nnkit::AdamConfig{config.alpha_lr});
  const auto alpha_at = static_cast<std::size_t>(result.params.alpha_offset());

  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0;
  auto next_task = [&]() {
    if (cursor == order.size()) {
      Rng shuffle_rng(derive_seed(config.seed, {2, epoch++}));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  const auto batch_size = static_cast<std::size_t>(config.meta_batch);
  for (int it = 0; it < config.iterations; ++it) {
    MetaParams& current = result.params;
    const PolicyShape& shape = current.policy;

    std::vector<std::size_t> slots(batch_size);
    std::vector<RolloutSet> train_sets(batch_size);
    std::vector<RolloutSet> test_sets(batch_size);
    std::vector<std::vector<Eigen::VectorXd>> advantages(batch_size);
    double pre_return = 0.0;
    double post_return = 0.0;
    double clipped = 0.0;
    double components = 0.0;
    const double limit = envs::action_limit(kind);

    const envs::Policy behaviour = stochastic_policy(shape, current.theta);
    for (std::size_t j = 0; j < batch_size; ++j) {
      slots[j] = next_task();
      const envs::TaskSpec& task = tasks[slots[j]];
      Rng rng(derive_seed(config.seed, {1, static_cast<std::uint64_t>(it), j}));
      for (int k = 0; k < config.train_rollouts; ++k) {
        envs::Episode ep = envs::rollout(task, behaviour, train_h, rng, true);
        pre_return += envs::episode_return(ep);
        train_sets[j].add(envs::strip_rewards(std::move(ep)));
      }
      const ParamVector adapted = inner_adapt(current, train_sets[j]);
      const envs::Policy explore = stochastic_policy(shape, adapted);
      for (int k = 0; k < config.test_rollouts; ++k) {
        envs::Episode ep = envs::rollout(task, explore, test_h, rng, true);
        post_return += envs::episode_return(ep);
        for (const auto& t : ep) {
          clipped += static_cast<double>((t.a.array().abs() > limit).count());
          components += static_cast<double>(t.a.size());
        }
        test_sets[j].add(std::move(ep));
      }
      advantages[j] = centered_advantages(test_sets[j], config.discount);
    }
    normalize_advantages(advantages);

    ParamVector grad = ParamVector::zeros(packed.size());
    double loss = 0.0;
    for (std::size_t j = 0; j < batch_size; ++j) {
      nnkit::LossAndGrad lg;
      try {
        lg = meta_gradient(current, train_sets[j], test_sets[j], advantages[j], config.first_order);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("meta-train iteration " + std::to_string(it) + " " + e.stage(), e.value());
      }
      loss += lg.loss;
      grad.values += lg.grad.values;
    }
    const double inv = 1.0 / static_cast<double>(batch_size);
    grad.values *= inv;
    loss *= inv;

    const double alpha_before = packed[alpha_at];
    nnkit::adam_update(adam, packed, grad);
    if (config.alpha_lr > 0.0) {
      ParamVector a(Eigen::VectorXd::Constant(1, alpha_before));
      nnkit::adam_update(alpha_adam, a, ParamVector(Eigen::VectorXd::Constant(1, grad[alpha_at])));
      packed[alpha_at] = a[0];
    }
    if (!packed.all_finite()) throw NonFiniteError("meta-train iteration " + std::to_string(it) + " update", 0.0);
    result.params = result.params.with_packed(packed);

    if (it >= replay_start) {
      for (std::size_t j = 0; j < batch_size; ++j) {
        for (const auto& ep : train_sets[j].episodes) {
          replay::append(result.store, static_cast<std::int64_t>(slots[j]), ep);
        }
      }
    }

    IterationStats stats;
    stats.iteration = it;
    stats.pre_return = pre_return / static_cast<double>(batch_size * static_cast<std::size_t>(config.train_rollouts));
    stats.post_return = post_return / static_cast<double>(batch_size * static_cast<std::size_t>(config.test_rollouts));
    stats.outer_loss = loss;
    stats.alpha = result.params.alpha();
    stats.policy_std = result.params.theta.values.tail(shape.action_dim()).array().exp().mean();
    stats.clip_fraction = components > 0.0 ? clipped / components : 0.0;
    result.curve.push_back(stats);
    if (on_iteration) on_iteration(stats);
  }

  std::sort(result.store.batches.begin(), result.store.batches.end(),
            [](const auto& a, const auto& b) { return a.task_index < b.task_index; });
  return result;
}

nnkit::Checkpoint to_checkpoint(const MetaParams& params) {
  nnkit::Checkpoint ckpt;
  ckpt.sections.push_back({"policy", params.policy.mean, params.theta});
  ckpt.sections.push_back({"advantage", params.advantage, params.psi});
  ckpt.sections.push_back({"alpha", nnkit::MlpShape{}, ParamVector(Eigen::VectorXd::Constant(1, params.alpha_raw))});
  ckpt.sections.push_back(
      {"action_bound", nnkit::MlpShape{}, ParamVector(Eigen::VectorXd::Constant(1, params.policy.action_bound))});
  return ckpt;
}

MetaParams from_checkpoint(const nnkit::Checkpoint& ckpt) {
  MetaParams p;
  const auto& policy = ckpt.section("policy");
  const auto& adv = ckpt.section("advantage");
  const auto& alpha = ckpt.section("alpha");
  p.policy.mean = policy.shape;
  p.policy.mean.validate();
  p.advantage = adv.shape;
  p.advantage.validate();
  if (policy.params.size() != p.policy.parameter_count()) {
    throw DimensionError("policy section length", p.policy.parameter_count(), policy.params.size());
  }
  if (adv.params.size() != p.advantage.parameter_count()) {
    throw DimensionError("advantage section length", p.advantage.parameter_count(), adv.params.size());
  }
  if (alpha.params.size() != 1) throw DimensionError("alpha section length", 1, alpha.params.size());
  p.theta = policy.params;
  p.psi = adv.params;
  p.alpha_raw = alpha.params[0];
  p.policy.action_bound = ckpt.section("action_bound").params[0];
  return p;
}

}  // namespace mwcnp::norml
