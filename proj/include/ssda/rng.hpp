#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ssda {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Every consumer of randomness (batch order, init, lambda draws, ...) gets its
// own named stream derived from one root seed, so a phase that one method
// skips cannot shift the draws of any other phase.
inline std::uint64_t stream_seed(std::uint64_t root, std::string_view name) {
  return splitmix64(root ^ fnv1a64(name));
}

inline std::mt19937_64 make_stream(std::uint64_t root, std::string_view name) {
  return std::mt19937_64(stream_seed(root, name));
}

}  // namespace ssda
