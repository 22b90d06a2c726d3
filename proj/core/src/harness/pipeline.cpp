#include "mwcnp/harness/pipeline.hpp"

#include "mwcnp/errors.hpp"
#include "mwcnp/harness/report.hpp"
#include "mwcnp/seeding.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace mwcnp::harness {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Each command records the configuration it actually ran with.
void prepare_out(const ExperimentConfig& config, const std::string& command) {
  fs::create_directories(config.out_dir);
  save_config(config, config.out_dir / (command + "." + artifacts::kConfig));
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw std::runtime_error(std::string("missing ") + what + ": " + path.string());
}

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
  if (to <= from) return 0.0;
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to),
                         0.0) /
         static_cast<double>(to - from);
}

}  // namespace

MetaTrainOutputs cmd_meta_train(const ExperimentConfig& config,
                                const std::function<void(const norml::IterationStats&)>& progress) {
  config.validate();
  prepare_out(config, "meta-train");
  MetaTrainOutputs out{config.out_dir / artifacts::kMetaCheckpoint, config.out_dir / artifacts::kReplay,
                       config.out_dir / artifacts::kMetaCurve, 0};

  norml::MetaTrainResult result =
      norml::meta_train(config.env_kind, config.meta_train_tasks(), config.meta_train_config(), progress);

  nnkit::save_checkpoint(norml::to_checkpoint(result.params), out.checkpoint);
  result.store.policy_checkpoint_id = artifacts::kMetaCheckpoint;
  replay::save(result.store, out.replay);
  out.task_batches = result.store.batches.size();

  std::ofstream curve(out.curve);
  curve << "iteration,pre_return,post_return,outer_loss,alpha,policy_std,clip_fraction\n";
  for (const auto& s : result.curve) {
    curve << s.iteration << ',' << fmt(s.pre_return) << ',' << fmt(s.post_return) << ',' << fmt(s.outer_loss) << ','
          << fmt(s.alpha) << ',' << fmt(s.policy_std) << ',' << fmt(s.clip_fraction) << '\n';
  }
  return out;
}

CnpTrainOutputs cmd_cnp_train(const ExperimentConfig& config, const fs::path& replay_path,
                              const std::function<void(const cnp::TrainStats&)>& progress) {
  config.validate();
  require_file(replay_path, "replay file");
  const replay::ReplayStore store = replay::load(replay_path);
  const int s_dim = envs::state_dim(config.env_kind);
  const int a_dim = envs::action_dim(config.env_kind);
  if (store.state_dim != s_dim) throw DimensionError("replay state dim vs configured env", s_dim, store.state_dim);
  if (store.action_dim != a_dim) throw DimensionError("replay action dim vs configured env", a_dim, store.action_dim);
  if (store.env_kind != config.env_kind) {
    throw std::invalid_argument("replay env " + envs::to_string(store.env_kind) + " does not match configured env " +
                                envs::to_string(config.env_kind));
  }
  prepare_out(config, "cnp-train");

  Rng init_rng(derive_seed(config.seed, {20}));
  cnp::CnpModel model = cnp::init_model(s_dim, a_dim, config.cnp_config(), init_rng);
  std::vector<double> nll;
  nll.reserve(static_cast<std::size_t>(config.cnp_steps));
  model = cnp::train(std::move(model), store, config.cnp_train_config(), [&](const cnp::TrainStats& s) {
    nll.push_back(s.nll);
    if (progress) progress(s);
  });

  CnpTrainOutputs out{config.out_dir / artifacts::kCnpCheckpoint, config.out_dir / artifacts::kCnpCurve, 0.0, 0.0};
  nnkit::save_checkpoint(cnp::to_checkpoint(model), out.checkpoint);
  std::ofstream curve(out.curve);
  curve << "step,nll\n";
  for (std::size_t i = 0; i < nll.size(); ++i) curve << i << ',' << fmt(nll[i]) << '\n';
  const std::size_t window = std::min<std::size_t>(100, nll.size());
  out.initial_nll = mean_of(nll, 0, window);
  out.final_nll = mean_of(nll, nll.size() - window, nll.size());
  return out;
}

double evaluate_policy(const norml::MetaParams& meta, const nnkit::ParamVector& theta, const envs::TaskSpec& task,
                       int episodes, std::uint64_t seed) {
  const envs::Policy policy = norml::mean_policy(meta.policy, theta);
  const int horizon = envs::default_horizon(task.kind);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    total += envs::episode_return(
        envs::rollout(task, policy, horizon, derive_seed(seed, {static_cast<std::uint64_t>(e)}), true));
  }
  return total / static_cast<double>(episodes);
}

std::vector<EvalRecord> cmd_evaluate(const ExperimentConfig& config, const EvalOptions& options) {
  config.validate();
  const fs::path meta_path =
      options.meta_checkpoint.empty() ? config.out_dir / artifacts::kMetaCheckpoint : options.meta_checkpoint;
  const fs::path cnp_path =
      options.cnp_checkpoint.empty() ? config.out_dir / artifacts::kCnpCheckpoint : options.cnp_checkpoint;
  const bool need_cnp = std::find(config.modes.begin(), config.modes.end(), Mode::mwcnp) != config.modes.end();
  require_file(meta_path, "meta-policy checkpoint");
  if (need_cnp) require_file(cnp_path, "world-model checkpoint");

  const norml::MetaParams meta = norml::from_checkpoint(nnkit::load_checkpoint(meta_path));
  if (meta.policy.obs_dim() != envs::state_dim(config.env_kind)) {
    throw DimensionError("meta-policy observation dim vs configured env", envs::state_dim(config.env_kind),
                         meta.policy.obs_dim());
  }
  std::optional<cnp::CnpModel> model;
  if (need_cnp) {
    model = cnp::from_checkpoint(nnkit::load_checkpoint(cnp_path));
    if (model->state_dim != envs::state_dim(config.env_kind)) {
      throw DimensionError("world-model state dim vs configured env", envs::state_dim(config.env_kind),
                           model->state_dim);
    }
  }

  const std::vector<envs::TaskSpec> tasks = config.eval_task_list();
  if (options.logged_hidden_params && options.logged_hidden_params->size() != tasks.size()) {
    throw DimensionError("logged hidden params", tasks.size(), options.logged_hidden_params->size());
  }
  const envs::Policy behaviour = norml::stochastic_policy(meta.policy, meta.theta);
  const int horizon = envs::default_horizon(config.env_kind);
  const int real_horizon = config.conditioning_tuples > 0 ? std::min(config.conditioning_tuples, horizon) : horizon;

  const bool plot = options.write_csv && config.env_kind == envs::EnvKind::point;
  auto path_of = [&](const nnkit::ParamVector& theta, const envs::TaskSpec& task, std::uint64_t seed) {
    const envs::Episode ep = envs::rollout(task, norml::mean_policy(meta.policy, theta), horizon, seed, false);
    std::vector<Eigen::Vector2d> pts;
    if (!ep.empty()) pts.emplace_back(ep.front().s);
    for (const auto& t : ep) pts.emplace_back(t.s_next);
    return pts;
  };
  std::vector<TrajectoryPanel> panels;

  std::vector<EvalRecord> records;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const envs::TaskSpec& task = tasks[i];
    const std::uint64_t base = derive_seed(config.seed, {30, i});
    const std::uint64_t eval_seed = derive_seed(base, {0});
    const auto real_seed = [&](int k) { return derive_seed(base, {1, static_cast<std::uint64_t>(k)}); };
    const double pre = evaluate_policy(meta, meta.theta, task, config.eval_episodes, eval_seed);
    const envs::Episode real = envs::rollout(task, behaviour, real_horizon, real_seed(0), false);

    EvalRecord rec;
    rec.task_id = static_cast<int>(i);
    rec.hidden_param = options.logged_hidden_params ? (*options.logged_hidden_params)[i] : task.hidden_param;
    rec.pre_return = pre;
    if (plot) panels.push_back({rec.task_id, rec.hidden_param, path_of(meta.theta, task, eval_seed), {}});

    for (const Mode mode : config.modes) {
      nnkit::ParamVector theta;
      rec.mode = mode;
      if (mode == Mode::norml1) {
        norml::RolloutSet set;
        set.add(real);
        theta = norml::finetune(meta, set);
        rec.real_rollouts = 1;
        rec.halluc_rollouts = 0;
      } else if (mode == Mode::oracle25) {
        norml::RolloutSet set;
        for (int k = 0; k < config.oracle_rollouts; ++k) {
          set.add(k == 0 && real_horizon == horizon ? real
                                                    : envs::rollout(task, behaviour, horizon, real_seed(k), false));
        }
        theta = norml::finetune(meta, set);
        rec.real_rollouts = config.oracle_rollouts;
        rec.halluc_rollouts = 0;
      } else {
        Rng rng(derive_seed(base, {2}));
        std::vector<std::uint64_t> policy_seeds;
        for (int k = 0; k < config.halluc_rollouts; ++k) policy_seeds.push_back(real_seed(k + 1));
        cnp::AdaptOptions adapt{config.conditioning_tuples, config.halluc_mode};
        theta = cnp::adapt_with_model(*model, meta, real, config.halluc_rollouts, rng, adapt, policy_seeds).theta;
        rec.real_rollouts = 1;
        rec.halluc_rollouts = config.halluc_rollouts;
      }
      rec.post_return = evaluate_policy(meta, theta, task, config.eval_episodes, eval_seed);
      records.push_back(rec);
      if (plot) panels.back().post.emplace_back(mode, path_of(theta, task, eval_seed));
    }
  }
  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    return a.task_id != b.task_id ? a.task_id < b.task_id : a.mode < b.mode;
  });
  if (options.write_csv) {
    prepare_out(config, "evaluate");
    write_metrics(records, config.out_dir / artifacts::kMetrics);
    if (plot) {
      std::ofstream svg(config.out_dir / artifacts::kTrajectories);
      svg << trajectory_svg(panels);
    }
  }
  return records;
}

std::string format_metrics(const std::vector<EvalRecord>& records) {
  std::ostringstream o;
  o << kMetricsHeader << '\n';
  for (const auto& r : records) {
    o << r.task_id << ',' << fmt(r.hidden_param) << ',' << to_string(r.mode) << ',' << r.real_rollouts << ','
      << r.halluc_rollouts << ',' << fmt(r.pre_return) << ',' << fmt(r.post_return) << '\n';
  }
  return o.str();
}

void write_metrics(const std::vector<EvalRecord>& records, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write metrics file " + path.string());
  out << format_metrics(records);
}

namespace {

template <typename T>
T field_as(const std::string& s, int line, const char* name) {
  T out{};
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw std::runtime_error("metrics line " + std::to_string(line) + ": bad " + name + " '" + s + "'");
  }
  return out;
}

}  // namespace

std::vector<EvalRecord> parse_metrics(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error("metrics line 1: expected header '" + std::string(kMetricsHeader) + "'");
  }
  std::vector<EvalRecord> records;
  std::map<std::pair<int, Mode>, int> seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) {
      throw std::runtime_error("metrics line " + std::to_string(lineno) + ": expected 7 fields, got " +
                               std::to_string(cells.size()));
    }
    EvalRecord r;
    r.task_id = field_as<int>(cells[0], lineno, "task_id");
    r.hidden_param = field_as<double>(cells[1], lineno, "hidden_param");
    try {
      r.mode = mode_from_string(cells[2]);
    } catch (const ConfigError&) {
      throw std::runtime_error("metrics line " + std::to_string(lineno) + ": unknown mode '" + cells[2] + "'");
    }
    r.real_rollouts = field_as<int>(cells[3], lineno, "real_rollouts");
    r.halluc_rollouts = field_as<int>(cells[4], lineno, "halluc_rollouts");
    r.pre_return = field_as<double>(cells[5], lineno, "pre_return");
    r.post_return = field_as<double>(cells[6], lineno, "post_return");
    const auto [it, inserted] = seen.emplace(std::make_pair(r.task_id, r.mode), lineno);
    if (!inserted) {
      throw std::runtime_error("metrics lines " + std::to_string(it->second) + " and " + std::to_string(lineno) +
                               ": duplicate (task " + std::to_string(r.task_id) + ", " + to_string(r.mode) + ")");
    }
    records.push_back(r);
  }
  return records;
}

std::vector<EvalRecord> read_metrics(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read metrics file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_metrics(ss.str());
}

}  // namespace mwcnp::harness
