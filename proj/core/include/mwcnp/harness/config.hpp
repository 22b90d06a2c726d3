#pragma once

#include "mwcnp/cnp.hpp"
#include "mwcnp/envs.hpp"
#include "mwcnp/norml.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace mwcnp::harness {

enum class Mode { norml1, oracle25, mwcnp };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Flat key=value file, one pair per line, '#' starts a comment. The env key
// picks the defaults the remaining keys override.
struct ExperimentConfig {
  envs::EnvKind env_kind = envs::EnvKind::point;
  std::uint64_t seed = 0;

  // meta-training
  int meta_tasks = 500;
  int meta_iterations = 1000;
  int meta_batch = 10;
  int train_rollouts = 25;
  int test_rollouts = 10;
  int train_horizon = 0;  // 0: environment default
  int test_horizon = 0;
  double outer_lr = 1e-3;
  double alpha_lr = 0.0;  // 0: same as outer_lr
  bool first_order = false;
  double replay_window = 0.5;
  int hidden = 64;
  int depth = 2;
  nnkit::Activation activation = nnkit::Activation::tanh;
  double init_std = 0.05;  // half the action bound
  double alpha_init = 0.01;
  double policy_output_scale = 0.1;

  // world model
  int cnp_steps = 20000;
  int cnp_k_max = 64;
  int cnp_latent = 32;
  int cnp_hidden = 64;
  int cnp_depth = 2;
  double cnp_lr = 1e-3;
  int cnp_queries = 16;
  int cnp_tasks_per_step = 4;

  // evaluation
  int eval_tasks = 10;
  bool eval_grid = true;
  std::vector<Mode> modes{Mode::norml1, Mode::oracle25, Mode::mwcnp};
  int oracle_rollouts = 25;
  int halluc_rollouts = 24;
  int eval_episodes = 10;
  int conditioning_tuples = 0;  // 0: the whole real rollout
  cnp::HallucinationMode halluc_mode = cnp::HallucinationMode::sample;

  std::filesystem::path out_dir = "out";

  void validate() const;
  norml::MetaTrainConfig meta_train_config() const;
  cnp::CnpConfig cnp_config() const;
  cnp::TrainConfig cnp_train_config() const;
  std::vector<envs::TaskSpec> meta_train_tasks() const;
  std::vector<envs::TaskSpec> eval_task_list() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

ExperimentConfig default_config(envs::EnvKind kind);

ExperimentConfig parse_config(const std::string& text);
std::string to_text(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

// Applies one key=value override on top of `config`.
void set_key(ExperimentConfig& config, const std::string& key, const std::string& value);

}  // namespace mwcnp::harness
