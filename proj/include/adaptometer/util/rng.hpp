#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace adaptometer::util {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Folds one more key into a running seed. Order matters.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
  return splitmix64(seed ^ splitmix64(key + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view key) {
  return mix_seed(seed, fnv1a(key));
}

/// Derives an independent stream from a root seed and any number of keys,
/// e.g. substream(seed, conv_id, speaker, rule). Streams for distinct key
/// tuples do not depend on how many other streams exist.
template <typename... Keys>
std::mt19937_64 substream(std::uint64_t seed, const Keys&... keys) {
  std::uint64_t s = splitmix64(seed);
  ((s = mix_seed(s, keys)), ...);
  return std::mt19937_64(s);
}

/// Uniform index in [0, n). Unlike std::uniform_int_distribution the
/// mapping is fixed, so draws are identical across standard libraries.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  // Rejection sampling over the largest multiple of n.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace adaptometer::util
