#pragma once

#include "mwcnp/nnkit/mlp.hpp"
#include "mwcnp/nnkit/param_vector.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mwcnp::nnkit {

// On-disk layout (all integers and floats little-endian):
//
//   "MWCNP1"
//   u32 field count, then per field: u32 name length, name, i64 value
//   u32 section count, then per section:
//     u32 name length, name
//     u32 layer count, u32 layer sizes[...], u8 activation
//     u64 value count, f64 values[...]
//
// A section without layer sizes holds a raw vector (e.g. a scalar).
struct CheckpointSection {
  std::string name;
  MlpShape shape;
  ParamVector params;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::int64_t>> fields;
  std::vector<CheckpointSection> sections;

  const CheckpointSection& section(const std::string& name) const;
  std::optional<std::int64_t> field(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mwcnp::nnkit
