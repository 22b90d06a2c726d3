#include "mwcnp/harness/config.hpp"

#include "mwcnp/seeding.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace mwcnp::harness {

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::norml1: return "norml1";
    case Mode::oracle25: return "oracle25";
    case Mode::mwcnp: return "mwcnp";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& name) {
  if (name == "norml1") return Mode::norml1;
  if (name == "oracle25") return Mode::oracle25;
  if (name == "mwcnp") return Mode::mwcnp;
  throw ConfigError("unknown evaluation mode '" + name + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value '" + value + "' for key " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad boolean '" + value + "' for key " + key);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

envs::EnvKind parse_env(const std::string& value) {
  try {
    return envs::env_kind_from_string(value);
  } catch (const std::invalid_argument&) {
    throw ConfigError("unknown environment '" + value + "' (expected point or cartpole)");
  }
}

}  // namespace

ExperimentConfig default_config(envs::EnvKind kind) {
  ExperimentConfig c;
  c.env_kind = kind;
  if (kind == envs::EnvKind::cartpole) {
    c.meta_tasks = 40;
    c.eval_tasks = 17;
    c.meta_iterations = 200;
    c.meta_batch = 5;
    c.train_rollouts = 10;
    c.test_rollouts = 5;
    c.outer_lr = 3e-3;
    c.init_std = 0.5;
  }
  return c;
}

void set_key(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto i = [&] { return parse_number<int>(key, value); };
  auto d = [&] { return parse_number<double>(key, value); };
  if (key == "env") c.env_kind = parse_env(value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "meta_tasks") c.meta_tasks = i();
  else if (key == "meta_iterations") c.meta_iterations = i();
  else if (key == "meta_batch") c.meta_batch = i();
  else if (key == "train_rollouts") c.train_rollouts = i();
  else if (key == "test_rollouts") c.test_rollouts = i();
  else if (key == "train_horizon") c.train_horizon = i();
  else if (key == "test_horizon") c.test_horizon = i();
  else if (key == "outer_lr") c.outer_lr = d();
  else if (key == "alpha_lr") c.alpha_lr = d();
  else if (key == "first_order") c.first_order = parse_bool(key, value);
  else if (key == "replay_window") c.replay_window = d();
  else if (key == "hidden") c.hidden = i();
  else if (key == "depth") c.depth = i();
  else if (key == "activation") {
    try {
      c.activation = nnkit::activation_from_string(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "init_std") c.init_std = d();
  else if (key == "alpha_init") c.alpha_init = d();
  else if (key == "policy_output_scale") c.policy_output_scale = d();
  else if (key == "cnp_steps") c.cnp_steps = i();
  else if (key == "cnp_k_max") c.cnp_k_max = i();
  else if (key == "cnp_latent") c.cnp_latent = i();
  else if (key == "cnp_hidden") c.cnp_hidden = i();
  else if (key == "cnp_depth") c.cnp_depth = i();
  else if (key == "cnp_lr") c.cnp_lr = d();
  else if (key == "cnp_queries") c.cnp_queries = i();
  else if (key == "cnp_tasks_per_step") c.cnp_tasks_per_step = i();
  else if (key == "eval_tasks") c.eval_tasks = i();
  else if (key == "eval_grid") c.eval_grid = parse_bool(key, value);
  else if (key == "modes") {
    c.modes.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) c.modes.push_back(mode_from_string(trim(item)));
  }
  else if (key == "oracle_rollouts") c.oracle_rollouts = i();
  else if (key == "halluc_rollouts") c.halluc_rollouts = i();
  else if (key == "eval_episodes") c.eval_episodes = i();
  else if (key == "conditioning_tuples") c.conditioning_tuples = i();
  else if (key == "halluc_mode") {
    if (value == "sample") c.halluc_mode = cnp::HallucinationMode::sample;
    else if (value == "mean") c.halluc_mode = cnp::HallucinationMode::mean;
    else throw ConfigError("bad halluc_mode '" + value + "'");
  }
  else if (key == "out") c.out_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::string env;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "env") env = value;
    pairs.emplace_back(std::move(key), std::move(value));
  }
  ExperimentConfig c = default_config(env.empty() ? envs::EnvKind::point : parse_env(env));
  for (const auto& [k, v] : pairs) set_key(c, k, v);
  c.validate();
  return c;
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto kv = [&](const char* k, const std::string& v) { o << k << '=' << v << '\n'; };
  const auto kd = [&](const char* k, double v) { kv(k, format_double(v)); };
  const auto ki = [&](const char* k, long long v) { kv(k, std::to_string(v)); };
  const auto kb = [&](const char* k, bool v) { kv(k, v ? "true" : "false"); };
  kv("env", envs::to_string(c.env_kind));
  kv("seed", std::to_string(c.seed));
  ki("meta_tasks", c.meta_tasks);
  ki("meta_iterations", c.meta_iterations);
  ki("meta_batch", c.meta_batch);
  ki("train_rollouts", c.train_rollouts);
  ki("test_rollouts", c.test_rollouts);
  ki("train_horizon", c.train_horizon);
  ki("test_horizon", c.test_horizon);
  kd("outer_lr", c.outer_lr);
  kd("alpha_lr", c.alpha_lr);
  kb("first_order", c.first_order);
  kd("replay_window", c.replay_window);
  ki("hidden", c.hidden);
  ki("depth", c.depth);
  kv("activation", nnkit::to_string(c.activation));
  kd("init_std", c.init_std);
  kd("alpha_init", c.alpha_init);
  kd("policy_output_scale", c.policy_output_scale);
  ki("cnp_steps", c.cnp_steps);
  ki("cnp_k_max", c.cnp_k_max);
  ki("cnp_latent", c.cnp_latent);
  ki("cnp_hidden", c.cnp_hidden);
  ki("cnp_depth", c.cnp_depth);
  kd("cnp_lr", c.cnp_lr);
  ki("cnp_queries", c.cnp_queries);
  ki("cnp_tasks_per_step", c.cnp_tasks_per_step);
  ki("eval_tasks", c.eval_tasks);
  kb("eval_grid", c.eval_grid);
  std::string modes;
  for (std::size_t i = 0; i < c.modes.size(); ++i) modes += (i ? "," : "") + to_string(c.modes[i]);
  kv("modes", modes);
  ki("oracle_rollouts", c.oracle_rollouts);
  ki("halluc_rollouts", c.halluc_rollouts);
  ki("eval_episodes", c.eval_episodes);
  ki("conditioning_tuples", c.conditioning_tuples);
  kv("halluc_mode", c.halluc_mode == cnp::HallucinationMode::sample ? "sample" : "mean");
  kv("out", c.out_dir.string());
  return o.str();
}

void ExperimentConfig::validate() const {
  const auto positive = [](const char* name, double v) {
    if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
  };
  const auto non_negative = [](const char* name, double v) {
    if (!(v >= 0)) throw ConfigError(std::string(name) + " must be non-negative");
  };
  positive("meta_tasks", meta_tasks);
  non_negative("meta_iterations", meta_iterations);
  positive("meta_batch", meta_batch);
  positive("train_rollouts", train_rollouts);
  positive("test_rollouts", test_rollouts);
  non_negative("train_horizon", train_horizon);
  non_negative("test_horizon", test_horizon);
  positive("outer_lr", outer_lr);
  non_negative("alpha_lr", alpha_lr);
  if (!(replay_window >= 0.0 && replay_window <= 1.0)) throw ConfigError("replay_window must lie in [0, 1]");
  positive("hidden", hidden);
  non_negative("depth", depth);
  positive("init_std", init_std);
  positive("alpha_init", alpha_init);
  positive("policy_output_scale", policy_output_scale);
  non_negative("cnp_steps", cnp_steps);
  positive("cnp_k_max", cnp_k_max);
  positive("cnp_latent", cnp_latent);
  positive("cnp_hidden", cnp_hidden);
  non_negative("cnp_depth", cnp_depth);
  positive("cnp_lr", cnp_lr);
  positive("cnp_queries", cnp_queries);
  positive("cnp_tasks_per_step", cnp_tasks_per_step);
  positive("eval_tasks", eval_tasks);
  if (modes.empty()) throw ConfigError("modes must name at least one evaluation mode");
  positive("oracle_rollouts", oracle_rollouts);
  non_negative("halluc_rollouts", halluc_rollouts);
  positive("eval_episodes", eval_episodes);
  non_negative("conditioning_tuples", conditioning_tuples);
}

norml::MetaTrainConfig ExperimentConfig::meta_train_config() const {
  norml::MetaTrainConfig m;
  m.iterations = meta_iterations;
  m.meta_batch = meta_batch;
  m.train_rollouts = train_rollouts;
  m.test_rollouts = test_rollouts;
  m.train_horizon = train_horizon;
  m.test_horizon = test_horizon;
  m.outer_lr = outer_lr;
  m.alpha_lr = alpha_lr;
  m.first_order = first_order;
  m.replay_window = replay_window;
  m.network.hidden = hidden;
  m.network.depth = depth;
  m.network.activation = activation;
  m.network.init_std = init_std;
  m.network.alpha_init = alpha_init;
  m.network.policy_output_scale = policy_output_scale;
  m.seed = derive_seed(seed, {10});
  return m;
}

cnp::CnpConfig ExperimentConfig::cnp_config() const {
  return cnp::CnpConfig{cnp_latent, cnp_hidden, cnp_depth, activation};
}

cnp::TrainConfig ExperimentConfig::cnp_train_config() const {
  return cnp::TrainConfig{cnp_steps, cnp_queries, cnp_tasks_per_step, cnp_k_max, cnp_lr, derive_seed(seed, {21})};
}

std::vector<envs::TaskSpec> ExperimentConfig::meta_train_tasks() const {
  return envs::sample_tasks(env_kind, static_cast<std::size_t>(meta_tasks), derive_seed(seed, {11}), false);
}

std::vector<envs::TaskSpec> ExperimentConfig::eval_task_list() const {
  return envs::sample_tasks(env_kind, static_cast<std::size_t>(eval_tasks), derive_seed(seed, {12}), eval_grid);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file " + path.string());
  out << to_text(config);
}

}  // namespace mwcnp::harness
