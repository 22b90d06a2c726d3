#pragma once

// Little-endian primitive readers/writers shared by the checkpoint and replay
// file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace mwcnp::io {

template <typename T>
T to_little(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }
}

template <typename T>
void write(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void write_string(std::ostream& os, const std::string& s) {
  write<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

// Returns false on short read.
template <typename T>
bool read(std::istream& is, T& out) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) return false;
  out = to_little(v);
  return true;
}

inline bool read_string(std::istream& is, std::string& out, std::uint32_t max_len = 1u << 16) {
  std::uint32_t n = 0;
  if (!read(is, n) || n > max_len) return false;
  out.resize(n);
  return static_cast<bool>(is.read(out.data(), n));
}

}  // namespace mwcnp::io
