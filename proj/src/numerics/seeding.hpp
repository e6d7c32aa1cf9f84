#pragma once

#include <cstdint>
#include <initializer_list>

namespace rohil {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Stable derived seed for a named sub-stream, e.g. derive_seed(seed, {kEvalStream, episode}).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

enum SeedStream : std::uint64_t {
  kStreamInit = 1,
  kStreamDemo = 2,
  kStreamTrainEpisode = 3,
  kStreamActionNoise = 4,
  kStreamLearnerNoise = 5,
  kStreamReplay = 6,
  kStreamEval = 7,
  kStreamSelectEval = 8,
  kStreamFinetune = 9,
};

}  // namespace rohil
