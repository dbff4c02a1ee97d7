#ifndef LPU_KRYLOV_HPP
#define LPU_KRYLOV_HPP

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "sparse_matrix.hpp"

namespace lpu {

struct Cg {
  friend bool operator==(const Cg&, const Cg&) = default;
};
struct Gmres {
  std::size_t restart = 30;
  friend bool operator==(const Gmres&, const Gmres&) = default;
};
struct BiCgStab {
  friend bool operator==(const BiCgStab&, const BiCgStab&) = default;
};
struct Richardson {
  double omega = 1.0;
  friend bool operator==(const Richardson&, const Richardson&) = default;
};

using SolverKind = std::variant<Cg, Gmres, BiCgStab, Richardson>;

struct SolverSpec {
  SolverKind kind = Cg{};
  double tol = 1e-5;
  std::size_t max_iterations = 10000;

  void validate() const {
    if (!(tol > 0.0)) throw argument_error("SolverSpec: tol must be positive");
    if (const auto* g = std::get_if<Gmres>(&kind); g && g->restart < 1)
      throw argument_error("SolverSpec: GMRES restart must be at least 1");
    if (const auto* r = std::get_if<Richardson>(&kind); r && (r->omega == 0.0 || !std::isfinite(r->omega)))
      throw argument_error("SolverSpec: Richardson omega must be finite and nonzero");
  }

  friend bool operator==(const SolverSpec&, const SolverSpec&) = default;
};

/// Short label used in reports: cg, gmres(30), bicgstab, richardson(0.5).
inline std::string solver_label(const SolverKind& kind) {
  return std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Cg>) {
          return "cg";
        } else if constexpr (std::is_same_v<K, Gmres>) {
          return "gmres(" + std::to_string(k.restart) + ")";
        } else if constexpr (std::is_same_v<K, BiCgStab>) {
          return "bicgstab";
        } else {
          char buf[48];
          std::snprintf(buf, sizeof buf, "richardson(%g)", k.omega);
          return buf;
        }
      },
      kind);
}

enum class StopReason {
  converged,
  max_iterations,
  breakdown, ///< zero denominator in the recurrence (e.g. indefinite pivot in CG, rho = 0 in BiCGSTAB)
  diverged   ///< Richardson residual grew tenfold
};

inline const char* to_string(StopReason r) {
  switch (r) {
  case StopReason::converged: return "converged";
  case StopReason::max_iterations: return "max_iterations";
  case StopReason::breakdown: return "breakdown";
  case StopReason::diverged: return "diverged";
  }
  return "?";
}

struct SolveOutcome {
  Vector x;
  std::size_t iterations = 0;
  bool converged = false;
  /// True relative residual ||A x - b|| / ||b|| of the returned x.
  double final_residual = 0.0;
  /// Wall-clock duration of the iteration loop only (allocation excluded).
  double apply_time_ns = 0.0;
  StopReason reason = StopReason::max_iterations;
  /// Per-iteration relative residual as tracked by the method (recurrence estimate for CG/BiCGSTAB/GMRES).
  std::vector<double> residual_history;
};

/// Called after every iteration with the current iterate (GMRES: after each restart cycle).
using IterateObserver = std::function<void(std::size_t iteration, std::span<const double> x)>;

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ns(Clock::time_point start) {
  return std::chrono::duration<double, std::nano>(Clock::now() - start).count();
}

inline double check_system(const SparseMatrix& A, std::span<const double> b) {
  if (!A.is_square()) throw dimension_error("solve: matrix must be square");
  if (b.size() != A.rows()) throw dimension_error("solve: b length does not match matrix");
  const double bnorm = norm2(b);
  if (bnorm == 0.0) throw argument_error("solve: ||b|| = 0");
  return bnorm;
}

inline void true_residual(const SparseMatrix& A, std::span<const double> x, std::span<const double> b,
                          std::span<double> r) {
  spmv(A, x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
}

} // namespace detail

/// Unpreconditioned conjugate gradients from x0 = 0.
inline SolveOutcome cg(const SparseMatrix& A, std::span<const double> b, double tol,
                       std::size_t max_iterations, const IterateObserver& observe = {}) {
  const double bnorm = detail::check_system(A, b);
  const std::size_t n = b.size();
  SolveOutcome out;
  out.x.assign(n, 0.0);
  Vector r(b.begin(), b.end()), p = r, Ap(n);
  double rr = dot(r, r);

  const auto start = detail::Clock::now();
  out.final_residual = 1.0;
  if (out.final_residual <= tol) {
    out.converged = true;
    out.reason = StopReason::converged;
  }
  while (!out.converged && out.iterations < max_iterations) {
    spmv(A, p, Ap);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) {
      out.reason = StopReason::breakdown;
      break;
    }
    const double alpha = rr / pAp;
    axpy(alpha, p, out.x);
    axpy(-alpha, Ap, r);
    double rr_new = dot(r, r);
    ++out.iterations;
    out.residual_history.push_back(std::sqrt(rr_new) / bnorm);
    if (observe) observe(out.iterations, out.x);

    if (std::sqrt(rr_new) / bnorm <= tol) {
      detail::true_residual(A, out.x, b, r);
      rr_new = dot(r, r);
      out.final_residual = std::sqrt(rr_new) / bnorm;
      if (out.final_residual <= tol) {
        out.converged = true;
        out.reason = StopReason::converged;
        break;
      }
      // Recurrence drifted from the true residual: restart the directions.
      p = r;
      rr = rr_new;
      continue;
    }
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  out.apply_time_ns = detail::elapsed_ns(start);
  if (!out.converged) out.final_residual = relative_residual(A, out.x, b);
  return out;
}

/// Restarted GMRES(m) with modified Gram-Schmidt and Givens rotations, x0 = 0.
inline SolveOutcome gmres(const SparseMatrix& A, std::span<const double> b, std::size_t restart, double tol,
                          std::size_t max_iterations, const IterateObserver& observe = {}) {
  const double bnorm = detail::check_system(A, b);
  if (restart < 1) throw argument_error("gmres: restart must be at least 1");
  const std::size_t n = b.size();
  const std::size_t m = std::min(restart, n);
  SolveOutcome out;
  out.x.assign(n, 0.0);
  std::vector<Vector> V(m + 1, Vector(n));
  std::vector<Vector> H(m + 1, Vector(m, 0.0));
  Vector cs(m), sn(m), g(m + 1), y(m), r(n), w(n);

  const auto start = detail::Clock::now();
  for (;;) {
    detail::true_residual(A, out.x, b, r);
    const double beta = norm2(r);
    out.final_residual = beta / bnorm;
    if (out.final_residual <= tol) {
      out.converged = true;
      out.reason = StopReason::converged;
      break;
    }
    if (out.iterations >= max_iterations) break;

    for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    std::size_t k = 0; // columns built in this cycle
    for (std::size_t j = 0; j < m && out.iterations < max_iterations; ++j) {
      spmv(A, V[j], w);
      const double wnorm = norm2(w);
      for (std::size_t i = 0; i <= j; ++i) {
        H[i][j] = dot(w, V[i]);
        axpy(-H[i][j], V[i], w);
      }
      H[j + 1][j] = norm2(w);
      for (std::size_t i = 0; i < j; ++i) {
        const double t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
        H[i + 1][j] = -sn[i] * H[i][j] + cs[i] * H[i + 1][j];
        H[i][j] = t;
      }
      const double denom = std::hypot(H[j][j], H[j + 1][j]);
      if (denom == 0.0) {
        out.reason = StopReason::breakdown;
        break;
      }
      cs[j] = H[j][j] / denom;
      sn[j] = H[j + 1][j] / denom;
      const double hnext = H[j + 1][j];
      H[j][j] = denom;
      H[j + 1][j] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++out.iterations;
      k = j + 1;
      out.residual_history.push_back(std::abs(g[j + 1]) / bnorm);
      if (hnext <= 1e-14 * wnorm) break; // invariant subspace found
      if (std::abs(g[j + 1]) / bnorm <= tol) break;
      for (std::size_t i = 0; i < n; ++i) V[j + 1][i] = w[i] / hnext;
    }
    if (k == 0) break;
    // Back substitution on the k x k triangle.
    for (std::size_t ii = k; ii-- > 0;) {
      double s = g[ii];
      for (std::size_t jj = ii + 1; jj < k; ++jj) s -= H[ii][jj] * y[jj];
      y[ii] = s / H[ii][ii];
    }
    for (std::size_t jj = 0; jj < k; ++jj) axpy(y[jj], V[jj], out.x);
    if (observe) observe(out.iterations, out.x);
    if (out.reason == StopReason::breakdown) break;
  }
  out.apply_time_ns = detail::elapsed_ns(start);
  out.final_residual = relative_residual(A, out.x, b);
  if (out.reason != StopReason::breakdown) {
    out.converged = out.final_residual <= tol;
    out.reason = out.converged ? StopReason::converged : StopReason::max_iterations;
  }
  return out;
}

/// BiCGSTAB (van der Vorst) from x0 = 0 with shadow residual r0.
inline SolveOutcome bicgstab(const SparseMatrix& A, std::span<const double> b, double tol,
                             std::size_t max_iterations, const IterateObserver& observe = {}) {
  const double bnorm = detail::check_system(A, b);
  const std::size_t n = b.size();
  SolveOutcome out;
  out.x.assign(n, 0.0);
  Vector r(b.begin(), b.end()), shadow = r, p(n, 0.0), v(n, 0.0), s(n), t(n);
  double rho_prev = 1.0, alpha = 1.0, omega = 1.0;
  bool fresh = true;

  const auto start = detail::Clock::now();
  out.final_residual = 1.0;
  if (out.final_residual <= tol) {
    out.converged = true;
    out.reason = StopReason::converged;
  }

  // Accepts x if its true residual meets tol; otherwise restarts from it.
  auto verify = [&]() {
    detail::true_residual(A, out.x, b, r);
    out.final_residual = norm2(r) / bnorm;
    if (out.final_residual <= tol) {
      out.converged = true;
      out.reason = StopReason::converged;
      return true;
    }
    shadow = r;
    fresh = true;
    return false;
  };

  while (!out.converged && out.iterations < max_iterations) {
    const double rho = dot(shadow, r);
    if (rho == 0.0) {
      out.reason = StopReason::breakdown;
      break;
    }
    if (fresh) {
      p = r;
      fresh = false;
    } else {
      const double beta = (rho / rho_prev) * (alpha / omega);
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    }
    spmv(A, p, v);
    const double sv = dot(shadow, v);
    if (sv == 0.0) {
      out.reason = StopReason::breakdown;
      break;
    }
    alpha = rho / sv;
    for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    axpy(alpha, p, out.x);
    ++out.iterations;

    const double snorm = norm2(s) / bnorm;
    if (snorm <= tol) {
      out.residual_history.push_back(snorm);
      if (observe) observe(out.iterations, out.x);
      if (verify()) break;
      continue;
    }
    spmv(A, s, t);
    const double tt = dot(t, t);
    if (tt == 0.0) {
      out.reason = StopReason::breakdown;
      break;
    }
    omega = dot(t, s) / tt;
    axpy(omega, s, out.x);
    for (std::size_t i = 0; i < n; ++i) r[i] = s[i] - omega * t[i];
    const double est = norm2(r) / bnorm;
    out.residual_history.push_back(est);
    if (observe) observe(out.iterations, out.x);
    if (est <= tol) {
      if (verify()) break;
      continue;
    }
    if (omega == 0.0) {
      out.reason = StopReason::breakdown;
      break;
    }
    rho_prev = rho;
  }
  out.apply_time_ns = detail::elapsed_ns(start);
  if (!out.converged) out.final_residual = relative_residual(A, out.x, b);
  return out;
}

/// x_{k+1} = x_k + omega (b - A x_k) from x0 = 0; stops as diverged once the residual exceeds 10x its initial value.
inline SolveOutcome richardson(const SparseMatrix& A, std::span<const double> b, double omega, double tol,
                               std::size_t max_iterations, const IterateObserver& observe = {}) {
  const double bnorm = detail::check_system(A, b);
  if (omega == 0.0 || !std::isfinite(omega)) throw argument_error("richardson: omega must be finite and nonzero");
  const std::size_t n = b.size();
  SolveOutcome out;
  out.x.assign(n, 0.0);
  Vector r(b.begin(), b.end());

  const auto start = detail::Clock::now();
  out.final_residual = 1.0;
  if (out.final_residual <= tol) {
    out.converged = true;
    out.reason = StopReason::converged;
  }
  while (!out.converged && out.iterations < max_iterations) {
    axpy(omega, r, out.x);
    detail::true_residual(A, out.x, b, r);
    ++out.iterations;
    out.final_residual = norm2(r) / bnorm;
    out.residual_history.push_back(out.final_residual);
    if (observe) observe(out.iterations, out.x);
    if (out.final_residual <= tol) {
      out.converged = true;
      out.reason = StopReason::converged;
    } else if (!(out.final_residual <= 10.0)) {
      out.reason = StopReason::diverged;
      break;
    }
  }
  out.apply_time_ns = detail::elapsed_ns(start);
  return out;
}

inline SolveOutcome solve(const SparseMatrix& A, std::span<const double> b, const SolverSpec& spec,
                          const IterateObserver& observe = {}) {
  spec.validate();
  return std::visit(
      [&](const auto& k) -> SolveOutcome {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Cg>) {
          return cg(A, b, spec.tol, spec.max_iterations, observe);
        } else if constexpr (std::is_same_v<K, Gmres>) {
          return gmres(A, b, k.restart, spec.tol, spec.max_iterations, observe);
        } else if constexpr (std::is_same_v<K, BiCgStab>) {
          return bicgstab(A, b, spec.tol, spec.max_iterations, observe);
        } else {
          return richardson(A, b, k.omega, spec.tol, spec.max_iterations, observe);
        }
      },
      spec.kind);
}

} // namespace lpu

#endif // LPU_KRYLOV_HPP
