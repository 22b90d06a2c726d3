#pragma once

#include <cstdint>
#include <initializer_list>

namespace mwcnp {

// Deterministic child seed from a base seed and a path of indices
// (iteration, task slot, rollout, ...), mixed with splitmix64.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t p : path) h = mix(h ^ mix(p));
  return h;
}

}  // namespace mwcnp
