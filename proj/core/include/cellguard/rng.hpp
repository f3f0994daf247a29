#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace cellguard {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the stream addressed by `path` under `seed`. Streams with
/// different paths are statistically independent, and the value depends only
/// on (seed, path), never on scheduling.
constexpr std::uint64_t stream_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = mix64(seed);
  for (const std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return Rng(stream_seed(seed, path));
}

/// `count` distinct values from [0, population), uniformly, in draw order.
std::vector<Eigen::Index> sample_without_replacement(Eigen::Index population,
                                                     Eigen::Index count, Rng& rng);

/// n x p matrix of independent standard normal draws, filled row by row.
Eigen::MatrixXd standard_normal_matrix(Eigen::Index n, Eigen::Index p, Rng& rng);

}  // namespace cellguard
