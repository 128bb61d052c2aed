#pragma once

#include <cstdint>
#include <random>

#include "igb/linalg.hpp"

namespace igb {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named sub-streams so that weights, data and shuffles of one run never
/// share random numbers.
enum class Stream : std::uint64_t {
  Weights = 1,
  Data = 2,
  Shuffle = 3,
  Sampling = 4,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(mix_seed(mix_seed(seed) ^ static_cast<std::uint64_t>(stream)));
}

template <class D>
void fill_normal(Eigen::PlainObjectBase<D>& m, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

}  // namespace igb
