#ifndef LPU_GENERATORS_HPP
#define LPU_GENERATORS_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "random.hpp"
#include "sparse_matrix.hpp"

namespace lpu {

/**
 * Symmetric multi-banded matrix with diagonals at offsets -bandwidth..bandwidth.
 * Off-diagonal values are drawn from [-1, -0.1]; the diagonal equals the row's
 * off-diagonal magnitude plus `margin`, so the result is strictly diagonally
 * dominant and therefore symmetric positive definite.
 */
inline SparseMatrix banded_spd(std::size_t n, std::size_t bandwidth, std::uint64_t seed,
                               double margin = 1.0) {
  if (n == 0) throw argument_error("banded_spd: n must be at least 1");
  if (margin <= 0.0) throw argument_error("banded_spd: margin must be positive");
  NormalStream rng(seed);
  std::vector<Triplet> t;
  Vector diag(n, margin);
  for (std::size_t k = 1; k <= bandwidth && k < n; ++k) {
    for (std::size_t i = 0; i + k < n; ++i) {
      const double v = -(0.1 + 0.9 * rng.uniform());
      t.push_back({i, i + k, v});
      t.push_back({i + k, i, v});
      diag[i] += -v;
      diag[i + k] += -v;
    }
  }
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, diag[i]});
  return from_triplets(n, n, std::move(t));
}

/**
 * Random sparse matrix with roughly `density` off-diagonal fill, strictly
 * diagonally dominant by `margin`. With symmetric = true the pattern and values
 * are mirrored, giving an SPD matrix; otherwise the result is non-symmetric
 * but still has its spectrum in the open right half-plane.
 */
inline SparseMatrix random_diag_dominant(std::size_t n, double density, std::uint64_t seed,
                                         bool symmetric = true, double margin = 1.0) {
  if (n == 0) throw argument_error("random_diag_dominant: n must be at least 1");
  NormalStream rng(seed);
  std::vector<Triplet> t;
  Vector diag(n, margin);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = symmetric ? i + 1 : 0; j < n; ++j) {
      if (j == i || rng.uniform() >= density) continue;
      const double v = rng();
      t.push_back({i, j, v});
      diag[i] += std::abs(v);
      if (symmetric) {
        t.push_back({j, i, v});
        diag[j] += std::abs(v);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, diag[i]});
  return from_triplets(n, n, std::move(t));
}

} // namespace lpu

#endif // LPU_GENERATORS_HPP
