#pragma once

#include "mwcnp/harness/config.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mwcnp::harness {

// One evaluated (task, mode) pair. hidden_param is written for analysis and
// is never passed to a learner.
struct EvalRecord {
  int task_id = 0;
  double hidden_param = 0.0;
  Mode mode = Mode::norml1;
  int real_rollouts = 0;
  int halluc_rollouts = 0;
  double pre_return = 0.0;
  double post_return = 0.0;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

inline constexpr const char* kMetricsHeader =
    "task_id,hidden_param,mode,real_rollouts,halluc_rollouts,pre_return,post_return";

// Standard artifact names inside ExperimentConfig::out_dir.
namespace artifacts {
inline constexpr const char* kConfig = "config.txt";  // prefixed with the command name
inline constexpr const char* kMetaCheckpoint = "meta.ckpt";
inline constexpr const char* kReplay = "replay.bin";
inline constexpr const char* kMetaCurve = "meta_curve.csv";
inline constexpr const char* kCnpCheckpoint = "cnp.ckpt";
inline constexpr const char* kCnpCurve = "cnp_curve.csv";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kTrajectories = "trajectories.svg";  // point env only
}  // namespace artifacts

struct MetaTrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path replay;
  std::filesystem::path curve;
  std::size_t task_batches = 0;
};

MetaTrainOutputs cmd_meta_train(const ExperimentConfig& config,
                                const std::function<void(const norml::IterationStats&)>& progress = {});

struct CnpTrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path curve;
  double initial_nll = 0.0;  // mean over the first 100 steps
  double final_nll = 0.0;    // mean over the last 100 steps
};

// Throws DimensionError if the replay file disagrees with the configured env.
CnpTrainOutputs cmd_cnp_train(const ExperimentConfig& config, const std::filesystem::path& replay_path,
                              const std::function<void(const cnp::TrainStats&)>& progress = {});

struct EvalOptions {
  std::filesystem::path meta_checkpoint;  // default: out_dir/meta.ckpt
  std::filesystem::path cnp_checkpoint;   // default: out_dir/cnp.ckpt (only read for mwcnp)
  // Replaces the logged hidden_param column (one value per eval task). Only
  // the log changes; used to audit that nothing else depends on it.
  std::optional<std::vector<double>> logged_hidden_params;
  bool write_csv = true;
};

// Records sorted by (task_id, mode). Throws std::runtime_error naming a
// missing checkpoint file.
std::vector<EvalRecord> cmd_evaluate(const ExperimentConfig& config, const EvalOptions& options = {});

std::string format_metrics(const std::vector<EvalRecord>& records);
void write_metrics(const std::vector<EvalRecord>& records, const std::filesystem::path& path);
// Throws std::runtime_error with the offending line number on malformed or
// duplicate (task, mode) rows.
std::vector<EvalRecord> parse_metrics(const std::string& text);
std::vector<EvalRecord> read_metrics(const std::filesystem::path& path);

// Mean over `episodes` deterministic (mean-action) episodes in the real env.
double evaluate_policy(const norml::MetaParams& meta, const nnkit::ParamVector& theta, const envs::TaskSpec& task,
                       int episodes, std::uint64_t seed);

}  // namespace mwcnp::harness
