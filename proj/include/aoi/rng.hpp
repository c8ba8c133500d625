#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace aoi {

using Rng = std::mt19937_64;

// Independent stream keyed by a master seed and any number of 64-bit tags.
inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  words.push_back(static_cast<std::uint32_t>(master));
  words.push_back(static_cast<std::uint32_t>(master >> 32));
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Uniform double in [0,1) with 53 random bits.
inline double uniform01(Rng& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

// Unit-mean exponential.
inline double exp1(Rng& g) { return -std::log1p(-uniform01(g)); }

}  // namespace aoi
