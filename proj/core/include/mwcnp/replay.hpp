#pragma once

#include "mwcnp/envs.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mwcnp::replay {

// Reward-free transitions collected for one training task. `task_index` is
// an opaque label; it never encodes the hidden parameter.
struct TaskBatch {
  std::int64_t task_index = 0;
  std::vector<envs::Transition> transitions;
};

struct ReplayStore {
  envs::EnvKind env_kind = envs::EnvKind::point;
  int state_dim = 0;
  int action_dim = 0;
  std::uint64_t seed = 0;
  std::string policy_checkpoint_id;
  std::vector<TaskBatch> batches;

  static ReplayStore create(envs::EnvKind kind, std::uint64_t seed = 0, std::string policy_checkpoint_id = {});

  std::size_t transition_count() const;
  const TaskBatch* find(std::int64_t task_index) const;

  friend bool operator==(const ReplayStore& a, const ReplayStore& b);
};

enum class ReplayErrorKind { contract, bad_magic, malformed_header, dim_mismatch, truncated, io };

class ReplayError : public std::runtime_error {
 public:
  ReplayError(ReplayErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ReplayErrorKind kind() const noexcept { return kind_; }

 private:
  ReplayErrorKind kind_;
};

// Appends under `task_index`, creating the batch on first use. Rejects
// transitions that still carry a reward or whose sizes disagree with the
// store metadata; nothing is appended if any record is rejected.
ReplayStore& append(ReplayStore& store, std::int64_t task_index, const std::vector<envs::Transition>& transitions);

// Uniform over stored task batches.
const TaskBatch& sample_task_batch(const ReplayStore& store, Rng& rng);

struct ContextQuery {
  std::vector<envs::Transition> context;
  envs::Transition query;
};

// Draws k uniformly from {1, ..., min(k_max, |batch|)}, then k distinct
// context tuples, then one query tuple independently of the context (it may
// coincide with a context tuple).
ContextQuery sample_context_and_query(const TaskBatch& batch, int k_max, Rng& rng);

// Binary layout ("MWRB1", little-endian):
//   u8 env kind (0 point, 1 cartpole), u32 S, u32 A, u32 task count
//   per task: i64 task_index, u64 record count, records of 2S+A f64 (s, a, s')
// plus a "<stem>.meta" text sidecar of key=value lines.
void save(const ReplayStore& store, const std::filesystem::path& path);
ReplayStore load(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace mwcnp::replay
