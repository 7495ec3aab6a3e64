#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace statemix {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for the substream identified by `keys` under `base`. Distinct key
/// tuples give statistically independent generators, so a run can be
/// reproduced without replaying any other run.
inline std::uint64_t stream_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(base);
  for (auto k : keys) {
    h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  }
  return h;
}

inline Rng make_stream(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  return Rng{stream_seed(base, keys)};
}

// Stream purposes, so that e.g. training and evaluation series never share draws.
namespace stream {
inline constexpr std::uint64_t model = 1;
inline constexpr std::uint64_t train_series = 2;
inline constexpr std::uint64_t eval_series = 3;
inline constexpr std::uint64_t filter = 4;
inline constexpr std::uint64_t init = 5;
inline constexpr std::uint64_t update = 6;
}  // namespace stream

}  // namespace statemix
