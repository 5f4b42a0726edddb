#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace comfed {

// Independent random streams, keyed by purpose so that changing one consumer
// never shifts the draws of another.
enum class Stream : std::uint32_t {
  init = 1,
  partition = 2,
  sampling = 3,
  batching = 4,
  synthetic = 5,
  split = 6,
};

using Engine = std::mt19937_64;

// Engine seeded from (seed, stream, extra keys...). Keys are split into
// 32-bit words and fed through std::seed_seq.
inline Engine make_engine(std::uint64_t seed, Stream stream,
                          std::initializer_list<std::uint64_t> keys = {}) {
  std::vector<std::uint32_t> words;
  auto push = [&](std::uint64_t k) {
    words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  };
  push(seed);
  push(static_cast<std::uint64_t>(stream));
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

}  // namespace comfed
