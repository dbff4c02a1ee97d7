#ifndef LPU_ENCODING_HPP
#define LPU_ENCODING_HPP

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include "errors.hpp"
#include "sparse_matrix.hpp"

namespace lpu {

/// Which system is mapped onto the couplers.
enum class SystemMode {
  direct,          ///< A x = b as given
  normal_equations ///< A^T A x = A^T b (symmetric positive semidefinite)
};

/**
 * Sign of the encoded couplings.
 *
 * Read literally, the small-angle phase flow is d(phi)/dt = g (A_enc phi - b_enc),
 * which grows without bound when A has eigenvalues with positive real part.
 * `stabilized` negates A_enc and b_enc together (same steady state) so the flow
 * contracts for such matrices; `as_written` keeps the literal sign.
 */
enum class SignConvention { stabilized, as_written };

inline const char* to_string(SystemMode m) {
  return m == SystemMode::direct ? "direct" : "normal_equations";
}
inline const char* to_string(SignConvention s) {
  return s == SignConvention::stabilized ? "stabilized" : "as_written";
}

struct EncodingConfig {
  /// Largest phase offset from the reference that the run monitor tolerates (radians).
  double theta_max = 0.3;
  SystemMode system_mode = SystemMode::direct;
  /// Initial scale applied to b; phases settle near beta * x.
  double beta_init = 0.01;
  SignConvention sign = SignConvention::stabilized;

  void validate() const {
    if (!(theta_max > 0.0 && theta_max < std::numbers::pi / 2))
      throw argument_error("EncodingConfig: theta_max must lie in (0, pi/2)");
    if (!(beta_init > 0.0) || !std::isfinite(beta_init))
      throw argument_error("EncodingConfig: beta_init must be positive");
  }

  friend bool operator==(const EncodingConfig&, const EncodingConfig&) = default;
};

/**
 * Machine-ready instance: coupler values plus the scalings needed to map the
 * steady-state phases back to the original unknowns.
 *
 * coupling = s A' / sigma and drive = s beta b' / sigma, where (A', b') is the
 * system chosen by SystemMode and s = -1 for the stabilized sign. The
 * reference couplers satisfy reference[i] = -(row sum of coupling), so
 * reference + coupling * 1 == 0 holds bit-for-bit.
 */
struct LpuProblem {
  SparseMatrix coupling;
  Vector drive;
  Vector reference;
  double beta = 0.0;
  double sigma = 0.0;
  std::size_t n = 0;
  double theta_max = 0.3;
  SignConvention sign = SignConvention::stabilized;
  SystemMode system_mode = SystemMode::direct;
};

/// c_i = -sum_j a_ij, summed in stored column order.
inline Vector reference_couplings(const SparseMatrix& A) {
  if (!A.is_square()) throw dimension_error("reference_couplings: matrix must be square");
  Vector c(A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double sum = 0.0;
    for (double v : A.row_values(i)) sum += v;
    c[i] = -sum;
  }
  return c;
}

namespace detail {

// Divides by sigma, bumping sigma by one ulp at a time until every row's
// absolute sum is at most one after rounding.
inline std::pair<SparseMatrix, double> normalize_rows(const SparseMatrix& A, double sign) {
  double sigma = max_row_abs_sum(A);
  if (sigma == 0.0) throw argument_error("encode: zero matrix cannot be normalized");
  if (!std::isfinite(sigma)) throw argument_error("encode: matrix has non-finite entries");
  Vector vals(A.nnz());
  for (;;) {
    const auto src = A.values();
    for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = sign * src[k] / sigma;
    bool within = true;
    for (std::size_t i = 0; i < A.rows() && within; ++i) {
      double s = 0.0;
      for (std::size_t k = A.row_starts()[i]; k < A.row_starts()[i + 1]; ++k) s += std::abs(vals[k]);
      within = s <= 1.0;
    }
    if (within) break;
    sigma = std::nextafter(sigma, std::numeric_limits<double>::infinity());
  }
  std::vector<std::size_t> starts(A.row_starts().begin(), A.row_starts().end());
  std::vector<std::size_t> cols(A.col_indices().begin(), A.col_indices().end());
  return {SparseMatrix(A.rows(), A.cols(), std::move(starts), std::move(cols), std::move(vals)),
          sigma};
}

} // namespace detail

inline LpuProblem encode(const SparseMatrix& A, std::span<const double> b,
                         const EncodingConfig& cfg = {}) {
  cfg.validate();
  if (!A.is_square()) throw dimension_error("encode: matrix must be square");
  if (b.size() != A.rows()) throw dimension_error("encode: b length does not match matrix");
  if (norm_inf(b) == 0.0) throw argument_error("encode: b is identically zero");

  SparseMatrix system;
  Vector rhs;
  if (cfg.system_mode == SystemMode::normal_equations) {
    const SparseMatrix At = transpose(A);
    system = multiply(At, A);
    rhs = spmv(At, b);
    if (norm_inf(rhs) == 0.0) throw argument_error("encode: A^T b is identically zero");
  } else {
    system = A;
    rhs.assign(b.begin(), b.end());
  }

  const double sign = cfg.sign == SignConvention::stabilized ? -1.0 : 1.0;
  auto [coupling, sigma] = detail::normalize_rows(system, sign);

  LpuProblem p;
  p.n = A.rows();
  p.beta = cfg.beta_init;
  p.sigma = sigma;
  p.theta_max = cfg.theta_max;
  p.sign = cfg.sign;
  p.system_mode = cfg.system_mode;
  p.drive.resize(p.n);
  for (std::size_t i = 0; i < p.n; ++i) p.drive[i] = sign * (cfg.beta_init * rhs[i]) / sigma;
  p.reference = reference_couplings(coupling);
  p.coupling = std::move(coupling);
  return p;
}

/**
 * Maps phases (index 0 = reference laser) back to the unknowns of the original
 * system: x_i = (phi_i - phi_0) / beta. The sigma normalization cancels between
 * coupling and drive, so it does not appear here.
 */
inline Vector decode(std::span<const double> phases, const LpuProblem& problem) {
  if (phases.size() != problem.n + 1)
    throw dimension_error("decode: expected " + std::to_string(problem.n + 1) + " phases, got " +
                          std::to_string(phases.size()));
  if (problem.beta == 0.0) throw argument_error("decode: beta is zero");
  Vector x(problem.n);
  for (std::size_t i = 0; i < problem.n; ++i) {
    const double d = phases[i + 1] - phases[0];
    if (!std::isfinite(d)) throw argument_error("decode: non-finite phase");
    x[i] = d / problem.beta;
  }
  return x;
}

/// Shrinks the b scale (beta and drive) by `factor`; couplings and sigma are untouched.
inline LpuProblem shrink_scale(LpuProblem problem, double factor) {
  if (!(factor > 0.0 && factor < 1.0)) throw argument_error("shrink_scale: factor must be in (0, 1)");
  problem.beta *= factor;
  for (double& v : problem.drive) v *= factor;
  return problem;
}

} // namespace lpu

#endif // LPU_ENCODING_HPP
