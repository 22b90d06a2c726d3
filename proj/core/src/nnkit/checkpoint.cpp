#include "mwcnp/nnkit/checkpoint.hpp"

#include "binary_io.hpp"

#include <fstream>

namespace mwcnp::nnkit {

namespace {

constexpr char kMagic[6] = {'M', 'W', 'C', 'N', 'P', '1'};

}  // namespace

const CheckpointSection& Checkpoint::section(const std::string& name) const {
  for (const auto& s : sections) {
    if (s.name == name) return s;
  }
  throw CheckpointError("checkpoint has no section '" + name + "'");
}

std::optional<std::int64_t> Checkpoint::field(const std::string& name) const {
  for (const auto& [key, value] : fields) {
    if (key == name) return value;
  }
  return std::nullopt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.fields.size()));
  for (const auto& [key, value] : ckpt.fields) {
    io::write_string(os, key);
    io::write<std::int64_t>(os, value);
  }
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.sections.size()));
  for (const auto& s : ckpt.sections) {
    io::write_string(os, s.name);
    io::write<std::uint32_t>(os, static_cast<std::uint32_t>(s.shape.layer_sizes.size()));
    for (int size : s.shape.layer_sizes) io::write<std::uint32_t>(os, static_cast<std::uint32_t>(size));
    io::write<std::uint8_t>(os, s.shape.activation == Activation::tanh ? 0 : 1);
    io::write<std::uint64_t>(os, s.params.size());
    for (std::size_t i = 0; i < s.params.size(); ++i) io::write<double>(os, s.params[i]);
  }
  if (!os) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw CheckpointError("bad magic in " + path.string());
  }
  auto truncated = [&path]() { return CheckpointError("truncated checkpoint " + path.string()); };

  Checkpoint ckpt;
  std::uint32_t n_fields = 0;
  if (!io::read(is, n_fields)) throw truncated();
  for (std::uint32_t i = 0; i < n_fields; ++i) {
    std::string key;
    std::int64_t value = 0;
    if (!io::read_string(is, key) || !io::read(is, value)) throw truncated();
    ckpt.fields.emplace_back(std::move(key), value);
  }
  std::uint32_t n_sections = 0;
  if (!io::read(is, n_sections)) throw truncated();
  for (std::uint32_t i = 0; i < n_sections; ++i) {
    CheckpointSection s;
    std::uint32_t n_layers = 0;
    if (!io::read_string(is, s.name) || !io::read(is, n_layers) || n_layers > 1024) throw truncated();
    for (std::uint32_t l = 0; l < n_layers; ++l) {
      std::uint32_t size = 0;
      if (!io::read(is, size)) throw truncated();
      s.shape.layer_sizes.push_back(static_cast<int>(size));
    }
    std::uint8_t act = 0;
    std::uint64_t count = 0;
    if (!io::read(is, act) || !io::read(is, count)) throw truncated();
    s.shape.activation = act == 0 ? Activation::tanh : Activation::relu;
    if (!s.shape.layer_sizes.empty() && s.shape.parameter_count() > count) {
      throw CheckpointError("section '" + s.name + "' holds fewer values than its layer sizes require");
    }
    s.params = ParamVector::zeros(count);
    for (std::uint64_t k = 0; k < count; ++k) {
      if (!io::read(is, s.params[k])) throw truncated();
    }
    ckpt.sections.push_back(std::move(s));
  }
  return ckpt;
}

}  // namespace mwcnp::nnkit
