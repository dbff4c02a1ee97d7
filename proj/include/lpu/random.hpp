#ifndef LPU_RANDOM_HPP
#define LPU_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <random>

#include "errors.hpp"
#include "sparse_matrix.hpp"

namespace lpu {

/**
 * Standard-normal stream with a fully specified construction, so a given seed
 * yields the same numbers with every standard library:
 *
 *  - engine: std::mt19937_64 (its output sequence is fixed by the C++ standard);
 *  - uniforms: the top 53 bits of one draw, u = (k + 1) * 2^-53, so u is in (0, 1];
 *  - normals: Box-Muller pairs z0 = r cos(2 pi u2), z1 = r sin(2 pi u2), r = sqrt(-2 ln u1).
 *
 * std::normal_distribution is avoided because its algorithm is implementation-defined.
 */
class NormalStream {
public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// i.i.d. standard-normal right-hand side, reproducible from (n, seed).
inline Vector random_rhs(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw argument_error("random_rhs: n must be at least 1");
  NormalStream normal(seed);
  Vector b(n);
  for (double& v : b) v = normal();
  return b;
}

/// FNV-1a over the IEEE-754 bytes of every entry; identifies a vector in reports.
inline std::uint64_t vector_checksum(std::span<const double> v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double d : v) {
    std::uint64_t bits = 0;
    static_assert(sizeof bits == sizeof d);
    std::memcpy(&bits, &d, sizeof d);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

} // namespace lpu

#endif // LPU_RANDOM_HPP
