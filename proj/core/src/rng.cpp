#include "cellguard/rng.hpp"

#include <numeric>
#include <stdexcept>

namespace cellguard {

std::vector<Eigen::Index> sample_without_replacement(Eigen::Index population,
                                                     Eigen::Index count, Rng& rng) {
  if (count < 0 || count > population) {
    throw std::invalid_argument("sample_without_replacement: count exceeds population");
  }
  // Partial Fisher-Yates over an index permutation.
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(population));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, population - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

Eigen::MatrixXd standard_normal_matrix(Eigen::Index n, Eigen::Index p, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) out(i, j) = normal(rng);
  }
  return out;
}

}  // namespace cellguard
