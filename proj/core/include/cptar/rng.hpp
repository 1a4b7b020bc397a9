#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace cptar {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream ids...). Every randomized routine
/// derives its streams through this so runs are reproducible from the seed.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> streams = {}) {
  std::vector<std::uint32_t> words;
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (auto s : streams) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq mixed(words.begin(), words.end());
  return Rng(mixed);
}

}  // namespace cptar
