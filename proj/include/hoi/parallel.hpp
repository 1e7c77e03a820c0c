#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace hoi {

/// Resolves a thread-count request (0 = hardware concurrency, at least 1).
int resolve_threads(int requested);

/// Runs fn(i) for i in [0, n) on up to `threads` workers using a static
/// contiguous partition. fn must only write to per-index outputs.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Counter-based random numbers: a stateless hash of a key tuple, so each
/// pixel/sample can draw its own stream independent of scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_key(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t h = splitmix64(a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return splitmix64(h ^ d);
}

/// Uniform double in [0, 1) from a 64-bit hash.
inline double unit_from_hash(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace hoi
