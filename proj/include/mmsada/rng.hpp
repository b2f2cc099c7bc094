#pragma once

// Seed-stream splitting. Every consumer of randomness owns a std::mt19937_64
// seeded by derive_seed(base, tags...), where the tags name the consumer
// (e.g. {kStreamData, domain index}). Streams derived from distinct tag
// sequences are independent, so concurrent runs and sub-tasks never share
// generator state.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mmsada {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
  return h;
}

inline std::mt19937_64 make_stream(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return std::mt19937_64(derive_seed(base, tags));
}

enum StreamTag : std::uint64_t {
  kStreamPrototypes = 1,
  kStreamDomain = 2,
  kStreamSegments = 3,
  kStreamInit = 10,
  kStreamBatches = 11,
  kStreamDropout = 12,
  kStreamAdaptation = 13,
};

}  // namespace mmsada
