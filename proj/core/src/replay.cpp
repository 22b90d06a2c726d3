#include "mwcnp/replay.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <numeric>

namespace mwcnp::replay {

namespace {

constexpr char kMagic[5] = {'M', 'W', 'R', 'B', '1'};

bool same_transition(const envs::Transition& a, const envs::Transition& b) {
  return a.s == b.s && a.a == b.a && a.s_next == b.s_next && a.reward == b.reward;
}

}  // namespace

ReplayStore ReplayStore::create(envs::EnvKind kind, std::uint64_t seed, std::string policy_checkpoint_id) {
  ReplayStore store;
  store.env_kind = kind;
  store.state_dim = envs::state_dim(kind);
  store.action_dim = envs::action_dim(kind);
  store.seed = seed;
  store.policy_checkpoint_id = std::move(policy_checkpoint_id);
  return store;
}

std::size_t ReplayStore::transition_count() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.transitions.size();
  return n;
}

const TaskBatch* ReplayStore::find(std::int64_t task_index) const {
  for (const auto& b : batches) {
    if (b.task_index == task_index) return &b;
  }
  return nullptr;
}

bool operator==(const ReplayStore& a, const ReplayStore& b) {
  if (a.env_kind != b.env_kind || a.state_dim != b.state_dim || a.action_dim != b.action_dim || a.seed != b.seed ||
      a.policy_checkpoint_id != b.policy_checkpoint_id || a.batches.size() != b.batches.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.batches.size(); ++i) {
    const auto& x = a.batches[i];
    const auto& y = b.batches[i];
    if (x.task_index != y.task_index || x.transitions.size() != y.transitions.size()) return false;
    for (std::size_t k = 0; k < x.transitions.size(); ++k) {
      if (!same_transition(x.transitions[k], y.transitions[k])) return false;
    }
  }
  return true;
}

ReplayStore& append(ReplayStore& store, std::int64_t task_index, const std::vector<envs::Transition>& transitions) {
  for (const auto& t : transitions) {
    if (t.reward.has_value()) throw ReplayError(ReplayErrorKind::contract, "reward must be stripped before storing");
    if (t.s.size() != store.state_dim || t.s_next.size() != store.state_dim) {
      throw ReplayError(ReplayErrorKind::dim_mismatch,
                        "state dimension " + std::to_string(t.s.size()) + " does not match store dimension " +
                            std::to_string(store.state_dim));
    }
    if (t.a.size() != store.action_dim) {
      throw ReplayError(ReplayErrorKind::dim_mismatch,
                        "action dimension " + std::to_string(t.a.size()) + " does not match store dimension " +
                            std::to_string(store.action_dim));
    }
  }
  TaskBatch* batch = nullptr;
  for (auto& b : store.batches) {
    if (b.task_index == task_index) batch = &b;
  }
  if (batch == nullptr) {
    store.batches.push_back(TaskBatch{task_index, {}});
    batch = &store.batches.back();
  }
  for (const auto& t : transitions) {
    envs::Transition copy = t;
    copy.done = false;
    batch->transitions.push_back(std::move(copy));
  }
  return store;
}

const TaskBatch& sample_task_batch(const ReplayStore& store, Rng& rng) {
  if (store.batches.empty()) throw ReplayError(ReplayErrorKind::contract, "cannot sample from an empty replay store");
  std::uniform_int_distribution<std::size_t> dist(0, store.batches.size() - 1);
  return store.batches[dist(rng)];
}

ContextQuery sample_context_and_query(const TaskBatch& batch, int k_max, Rng& rng) {
  const std::size_t n = batch.transitions.size();
  if (n < 2) {
    throw ReplayError(ReplayErrorKind::contract,
                      "task batch needs at least 2 transitions, has " + std::to_string(n));
  }
  if (k_max < 1) throw ReplayError(ReplayErrorKind::contract, "k_max must be at least 1");
  const std::size_t k_hi = std::min<std::size_t>(static_cast<std::size_t>(k_max), n);
  std::uniform_int_distribution<std::size_t> k_dist(1, k_hi);
  const std::size_t k = k_dist(rng);

  // Partial Fisher-Yates over indices for k distinct context tuples.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  ContextQuery out;
  out.context.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.context.push_back(batch.transitions[idx[i]]);
  }
  std::uniform_int_distribution<std::size_t> q(0, n - 1);
  out.query = batch.transitions[q(rng)];
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p.replace_extension(".meta");
  return p;
}

void save(const ReplayStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ReplayError(ReplayErrorKind::io, "cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  io::write<std::uint8_t>(os, store.env_kind == envs::EnvKind::point ? 0 : 1);
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(store.state_dim));
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(store.action_dim));
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(store.batches.size()));
  for (const auto& b : store.batches) {
    io::write<std::int64_t>(os, b.task_index);
    io::write<std::uint64_t>(os, b.transitions.size());
    for (const auto& t : b.transitions) {
      for (Eigen::Index i = 0; i < t.s.size(); ++i) io::write<double>(os, t.s(i));
      for (Eigen::Index i = 0; i < t.a.size(); ++i) io::write<double>(os, t.a(i));
      for (Eigen::Index i = 0; i < t.s_next.size(); ++i) io::write<double>(os, t.s_next(i));
    }
  }
  if (!os) throw ReplayError(ReplayErrorKind::io, "write failed for " + path.string());

  std::ofstream meta(sidecar_path(path), std::ios::trunc);
  meta << "env_kind=" << envs::to_string(store.env_kind) << "\n"
       << "state_dim=" << store.state_dim << "\n"
       << "action_dim=" << store.action_dim << "\n"
       << "task_count=" << store.batches.size() << "\n"
       << "seed=" << store.seed << "\n"
       << "policy_checkpoint=" << store.policy_checkpoint_id << "\n";
  if (!meta) throw ReplayError(ReplayErrorKind::io, "write failed for " + sidecar_path(path).string());
}

namespace {

void read_sidecar(ReplayStore& store, const std::filesystem::path& path) {
  std::ifstream meta(sidecar_path(path));
  if (!meta) return;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "seed") {
      store.seed = std::stoull(value);
    } else if (key == "policy_checkpoint") {
      store.policy_checkpoint_id = value;
    } else if (key == "env_kind" && value != envs::to_string(store.env_kind)) {
      throw ReplayError(ReplayErrorKind::malformed_header, "sidecar env_kind '" + value + "' disagrees with " +
                                                                 path.string());
    }
  }
}

}  // namespace

ReplayStore load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ReplayError(ReplayErrorKind::io, "cannot open replay file " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw ReplayError(ReplayErrorKind::bad_magic, "bad magic in " + path.string());
  }
  std::uint8_t kind = 0;
  std::uint32_t s_dim = 0;
  std::uint32_t a_dim = 0;
  std::uint32_t tasks = 0;
  if (!io::read(is, kind) || !io::read(is, s_dim) || !io::read(is, a_dim) || !io::read(is, tasks)) {
    throw ReplayError(ReplayErrorKind::malformed_header, "replay header incomplete in " + path.string());
  }
  if (kind > 1) {
    throw ReplayError(ReplayErrorKind::malformed_header, "unknown env kind tag " + std::to_string(kind));
  }
  ReplayStore store = ReplayStore::create(kind == 0 ? envs::EnvKind::point : envs::EnvKind::cartpole);
  if (static_cast<int>(s_dim) != store.state_dim || static_cast<int>(a_dim) != store.action_dim) {
    throw ReplayError(ReplayErrorKind::dim_mismatch,
                      "header dims S=" + std::to_string(s_dim) + " A=" + std::to_string(a_dim) + " inconsistent with " +
                          envs::to_string(store.env_kind));
  }

  const auto record_len = static_cast<std::size_t>(2 * s_dim + a_dim);
  std::vector<double> buf(record_len);
  for (std::uint32_t ti = 0; ti < tasks; ++ti) {
    TaskBatch batch;
    std::uint64_t count = 0;
    const auto header_offset = static_cast<long long>(is.tellg());
    if (!io::read(is, batch.task_index) || !io::read(is, count)) {
      throw ReplayError(ReplayErrorKind::truncated, "truncated task header at offset " + std::to_string(header_offset));
    }
    batch.transitions.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
    for (std::uint64_t r = 0; r < count; ++r) {
      const auto offset = static_cast<long long>(is.tellg());
      for (std::size_t k = 0; k < record_len; ++k) {
        if (!io::read(is, buf[k])) {
          throw ReplayError(ReplayErrorKind::truncated, "truncated record at offset " + std::to_string(offset));
        }
      }
      envs::Transition t;
      t.s = Eigen::Map<const Eigen::VectorXd>(buf.data(), s_dim);
      t.a = Eigen::Map<const Eigen::VectorXd>(buf.data() + s_dim, a_dim);
      t.s_next = Eigen::Map<const Eigen::VectorXd>(buf.data() + s_dim + a_dim, s_dim);
      batch.transitions.push_back(std::move(t));
    }
    store.batches.push_back(std::move(batch));
  }
  read_sidecar(store, path);
  return store;
}

}  // namespace mwcnp::replay
