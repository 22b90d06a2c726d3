#include "mwcnp/cnp.hpp"
#include "mwcnp/envs.hpp"
#include "mwcnp/nnkit/meta_grad.hpp"
#include "mwcnp/nnkit/mlp.hpp"
#include "mwcnp/norml.hpp"
#include "mwcnp/replay.hpp"

#include <benchmark/benchmark.h>

using namespace mwcnp;

namespace {

norml::MetaParams meta_params(envs::EnvKind kind) {
  Rng rng(1);
  return norml::init_meta_params(envs::state_dim(kind), envs::action_dim(kind), envs::action_limit(kind),
                                 norml::NetworkConfig{}, rng);
}

norml::RolloutSet rollouts(const norml::MetaParams& meta, envs::EnvKind kind, int n, int horizon, bool rewards) {
  const envs::TaskSpec task{kind, 0.05};
  norml::RolloutSet set;
  for (int e = 0; e < n; ++e) {
    set.add(envs::rollout(task, norml::stochastic_policy(meta.policy, meta.theta), horizon,
                          static_cast<std::uint64_t>(e + (rewards ? 1000 : 0)), rewards));
  }
  return set;
}

}  // namespace

static void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const auto shape = nnkit::make_shape(6, 64, 2, 2);
  const nnkit::ParamVector params = nnkit::init_params(shape, rng);
  const nnkit::Matrix x = nnkit::Matrix::Random(state.range(0), 6);
  for (auto _ : state) {
    auto lg = nnkit::grad(
        [&](const nnkit::Var& p) { return nnkit::mean(nnkit::forward(shape, p, 0, nnkit::Var::constant(x))); }, params);
    benchmark::DoNotOptimize(lg.loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(16)->Arg(256)->Arg(2048);

static void BM_PointStep(benchmark::State& state) {
  const envs::TaskSpec task{envs::EnvKind::point, 1.0};
  envs::EnvState s = envs::reset(task, 3);
  const Eigen::VectorXd a = Eigen::Vector2d(0.05, -0.02);
  for (auto _ : state) {
    auto r = envs::step(s, task, a);
    benchmark::DoNotOptimize(r.reward);
    if (r.done) s = envs::reset(task, 3);
    else s = r.state;
  }
}
BENCHMARK(BM_PointStep);

static void BM_CartpoleStep(benchmark::State& state) {
  const envs::TaskSpec task{envs::EnvKind::cartpole, 0.05};
  envs::EnvState s = envs::reset(task, 3);
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 0.1);
  for (auto _ : state) {
    auto r = envs::step(s, task, a);
    benchmark::DoNotOptimize(r.reward);
    s = r.done ? envs::reset(task, 3) : r.state;
  }
}
BENCHMARK(BM_CartpoleStep);

// One task's second-order meta-gradient on point-env batches of 25 / 10 rollouts.
static void BM_MetaGradient(benchmark::State& state) {
  const auto meta = meta_params(envs::EnvKind::point);
  const auto d_train = rollouts(meta, envs::EnvKind::point, 25, 10, false);
  const auto d_test = rollouts(meta, envs::EnvKind::point, 10, 10, true);
  const auto adv = norml::centered_advantages(d_test, 1.0);
  const bool first_order = state.range(0) != 0;
  for (auto _ : state) {
    auto lg = norml::meta_gradient(meta, d_train, d_test, adv, first_order);
    benchmark::DoNotOptimize(lg.loss);
  }
}
BENCHMARK(BM_MetaGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Finetune(benchmark::State& state) {
  const auto meta = meta_params(envs::EnvKind::point);
  const auto d = rollouts(meta, envs::EnvKind::point, static_cast<int>(state.range(0)), 10, false);
  for (auto _ : state) benchmark::DoNotOptimize(norml::finetune(meta, d).values.data());
}
BENCHMARK(BM_Finetune)->Arg(1)->Arg(25)->Unit(benchmark::kMicrosecond);

static void BM_ReplaySample(benchmark::State& state) {
  const auto meta = meta_params(envs::EnvKind::point);
  auto store = replay::ReplayStore::create(envs::EnvKind::point);
  for (int t = 0; t < 50; ++t) {
    for (const auto& e : rollouts(meta, envs::EnvKind::point, 10, 10, false).episodes) replay::append(store, t, e);
  }
  Rng rng(4);
  for (auto _ : state) {
    const auto& batch = replay::sample_task_batch(store, rng);
    auto cq = replay::sample_context_and_query(batch, 64, rng);
    benchmark::DoNotOptimize(cq.context.data());
  }
}
BENCHMARK(BM_ReplaySample);

static void BM_CnpTrainStep(benchmark::State& state) {
  const auto meta = meta_params(envs::EnvKind::point);
  auto store = replay::ReplayStore::create(envs::EnvKind::point);
  for (int t = 0; t < 20; ++t) {
    for (const auto& e : rollouts(meta, envs::EnvKind::point, 10, 10, false).episodes) replay::append(store, t, e);
  }
  Rng rng(5);
  cnp::CnpModel model = cnp::init_model(2, 2, cnp::CnpConfig{}, rng);
  cnp::TrainConfig cfg;
  cfg.steps = 1;
  for (auto _ : state) {
    model = cnp::train(model, store, cfg);
    ++cfg.seed;
  }
}
BENCHMARK(BM_CnpTrainStep)->Unit(benchmark::kMicrosecond);

static void BM_Hallucinate(benchmark::State& state) {
  const auto meta = meta_params(envs::EnvKind::cartpole);
  Rng rng(6);
  const cnp::CnpModel model = cnp::init_model(4, 1, cnp::CnpConfig{}, rng);
  const auto ctx = rollouts(meta, envs::EnvKind::cartpole, 1, 50, false).episodes.front();
  const auto latent = cnp::encode_context(model, ctx);
  const auto policy = norml::stochastic_policy(meta.policy, meta.theta);
  const int horizon = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto ep = cnp::hallucinate_rollout(model, latent, policy, ctx.front().s, horizon, rng);
    benchmark::DoNotOptimize(ep.data());
  }
  state.SetItemsProcessed(state.iterations() * horizon);
}
BENCHMARK(BM_Hallucinate)->Arg(5)->Arg(50)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
