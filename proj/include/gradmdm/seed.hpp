#pragma once

#include <cstdint>

namespace gradmdm {

// Sub-stream tags for derive_seed. Values are part of the reproducibility
// contract; append, never renumber.
enum class Stream : std::uint64_t {
  dataset = 1,
  init = 2,
  sample = 3,
  train_retry = 4,
  eval_dataset = 5,
};

/// splitmix64 finaliser.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// seed' = splitmix64(splitmix64(seed ^ splitmix64(tag)) + index)
constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream tag, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(tag))) + index);
}

}  // namespace gradmdm
