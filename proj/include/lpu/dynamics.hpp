#ifndef LPU_DYNAMICS_HPP
#define LPU_DYNAMICS_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "encoding.hpp"
#include "errors.hpp"
#include "sparse_matrix.hpp"

namespace lpu {

using Complex = std::complex<double>;
using FieldVector = std::vector<Complex>;

/**
 * Cavity constants. Time is measured in roundtrips; tau and tau_gain are
 * expressed in that unit.
 */
struct CavityParams {
  double tau = 1.0;
  double tau_gain = 10.0;
  /// Pump strength. The default balances gain and loss (stationary gain == alpha) at |E| = 1.
  double pump = 0.4;
  double alpha = 0.1;
  /// Steady amplitude D of every laser.
  double amplitude = 1.0;
  /// Integrator step in roundtrips.
  double dt = 1.0;
  double roundtrip_ns = 20.0;

  /// Pump for which the stationary gain at |E| = amplitude equals alpha, i.e. g = 1.
  static double balanced_pump(double alpha, double amplitude) {
    return 2.0 * alpha * (1.0 + amplitude * amplitude);
  }

  void validate() const {
    if (!(tau > 0.0) || !(tau_gain > 0.0) || !(dt > 0.0))
      throw argument_error("CavityParams: tau, tau_gain and dt must be positive");
    if (!(alpha >= 0.0)) throw argument_error("CavityParams: alpha must be non-negative");
    if (!(pump > 0.0)) throw argument_error("CavityParams: pump must be positive");
    if (!(amplitude > 0.0)) throw argument_error("CavityParams: amplitude must be positive");
    if (!(roundtrip_ns > 0.0)) throw argument_error("CavityParams: roundtrip_ns must be positive");
  }

  friend bool operator==(const CavityParams&, const CavityParams&) = default;
};

enum class DynamicsMode {
  full_field,    ///< complex fields under the solver coupling, gains evolving
  phase_only,    ///< phases only, amplitudes pinned to D
  generic_cavity ///< complex fields under an arbitrary coupling matrix K
};

enum class Integrator { euler, rk4 };

/// Phase-flow right-hand side: the sine form, or its small-angle linearization.
enum class PhaseKernel { exact, linearized };

inline const char* to_string(DynamicsMode m) {
  switch (m) {
  case DynamicsMode::full_field: return "full_field";
  case DynamicsMode::phase_only: return "phase_only";
  case DynamicsMode::generic_cavity: return "generic_cavity";
  }
  return "?";
}
inline const char* to_string(Integrator i) { return i == Integrator::euler ? "euler" : "rk4"; }
inline const char* to_string(PhaseKernel k) {
  return k == PhaseKernel::exact ? "exact" : "linearized";
}

/**
 * Physical state of the n+1 lasers; index 0 is the reference laser.
 *
 * `phases` are unwrapped phase coordinates. In phase-only mode they are the
 * integrated variable and fields[i] == amplitude * exp(i phases[i]) after every
 * step. In the field modes they are recomputed as arg(fields[i]).
 */
struct LaserState {
  FieldVector fields;
  Vector gains;
  Vector phases;

  std::size_t size() const noexcept { return fields.size(); }

  /// All lasers at amplitude D, the given common phase, gains at their stationary value.
  static LaserState aligned(std::size_t lasers, const CavityParams& params, double phase = 0.0);
};

inline double stationary_gain(const CavityParams& params, double field_magnitude) {
  return params.pump / (2.0 * (1.0 + field_magnitude * field_magnitude));
}

inline LaserState LaserState::aligned(std::size_t lasers, const CavityParams& params, double phase) {
  LaserState s;
  s.fields.assign(lasers, std::polar(params.amplitude, phase));
  s.gains.assign(lasers, stationary_gain(params, params.amplitude));
  s.phases.assign(lasers, phase);
  return s;
}

/// g = exp(G - alpha)
inline double gain_loss(double gain, double alpha) { return std::exp(gain - alpha); }

/// dG/dt = (P - 2 G (1 + |E|^2)) / tau_gain
inline double gain_derivative(double gain, Complex field, const CavityParams& params) {
  return (params.pump - 2.0 * gain * (1.0 + std::norm(field))) / params.tau_gain;
}

namespace detail {

inline void require_lasers(std::size_t got, std::size_t n, const char* who) {
  if (got != n + 1)
    throw dimension_error(std::string(who) + ": expected " + std::to_string(n + 1) +
                          " lasers, got " + std::to_string(got));
}

} // namespace detail

/**
 * Solver field equation for lasers 1..n:
 *
 *   dE_i/dt = sum_j a_ij g_j E_j - i b_i g_i E_i + c_i g_0 E_0,
 *
 * with g_k = exp(G_k - alpha) taken from the state's gains. The reference laser
 * is held fixed, so its derivative is zero.
 */
inline FieldVector field_derivative(const LaserState& state, const LpuProblem& problem,
                                    const CavityParams& params) {
  const std::size_t n = problem.n;
  detail::require_lasers(state.fields.size(), n, "field_derivative");
  detail::require_lasers(state.gains.size(), n, "field_derivative");
  FieldVector weighted(n + 1);
  for (std::size_t k = 0; k <= n; ++k) weighted[k] = gain_loss(state.gains[k], params.alpha) * state.fields[k];

  FieldVector out(n + 1, Complex{0.0, 0.0});
  const Complex minus_i{0.0, -1.0};
  for (std::size_t i = 0; i < n; ++i) {
    Complex sum{0.0, 0.0};
    auto cols = problem.coupling.row_cols(i);
    auto vals = problem.coupling.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) sum += vals[k] * weighted[cols[k] + 1];
    sum += minus_i * problem.drive[i] * weighted[i + 1];
    sum += problem.reference[i] * weighted[0];
    out[i + 1] = sum;
  }
  return out;
}

/**
 * Phase equation for lasers 1..n at uniform gain-loss g:
 *
 *   dphi_i/dt = g [ sum_j a_ij sin(phi_j - phi_i) - b_i + c_i sin(phi_0 - phi_i) ],
 *
 * or with every sine replaced by its argument for PhaseKernel::linearized.
 * The reference phase does not move.
 */
inline Vector phase_derivative(std::span<const double> phases, const LpuProblem& problem, double g,
                               PhaseKernel kernel = PhaseKernel::exact) {
  const std::size_t n = problem.n;
  detail::require_lasers(phases.size(), n, "phase_derivative");
  Vector out(n + 1, 0.0);
  const double ref = phases[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = phases[i + 1];
    auto cols = problem.coupling.row_cols(i);
    auto vals = problem.coupling.row_values(i);
    double sum = 0.0;
    if (kernel == PhaseKernel::exact) {
      for (std::size_t k = 0; k < cols.size(); ++k) sum += vals[k] * std::sin(phases[cols[k] + 1] - phi);
      sum -= problem.drive[i];
      sum += problem.reference[i] * std::sin(ref - phi);
    } else {
      for (std::size_t k = 0; k < cols.size(); ++k) sum += vals[k] * (phases[cols[k] + 1] - phi);
      sum -= problem.drive[i];
      sum += problem.reference[i] * (ref - phi);
    }
    out[i + 1] = g * sum;
  }
  return out;
}

/**
 * Difference between the sine and linearized phase right-hand sides (per unit g).
 * At a steady state of the sine flow this is exactly minus the linear residual
 * A_enc phi - b_enc, so its size relative to ||b_enc|| bounds the attainable
 * relative residual at the current scale.
 */
inline Vector linearization_defect(std::span<const double> phases, const LpuProblem& problem) {
  const std::size_t n = problem.n;
  detail::require_lasers(phases.size(), n, "linearization_defect");
  Vector d(n, 0.0);
  const double ref = phases[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = phases[i + 1];
    auto cols = problem.coupling.row_cols(i);
    auto vals = problem.coupling.row_values(i);
    double sum = 0.0;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double t = phases[cols[k] + 1] - phi;
      sum += vals[k] * (std::sin(t) - t);
    }
    const double t0 = ref - phi;
    sum += problem.reference[i] * (std::sin(t0) - t0);
    d[i] = sum;
  }
  return d;
}

/// Dense complex matrix for the generic cavity coupling K (row-major).
class DenseComplexMatrix {
public:
  DenseComplexMatrix() = default;
  explicit DenseComplexMatrix(std::size_t n) : n_(n), data_(n * n) {}

  std::size_t size() const noexcept { return n_; }
  Complex& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  const Complex& operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

  static DenseComplexMatrix identity(std::size_t n) {
    DenseComplexMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

private:
  std::size_t n_ = 0;
  FieldVector data_;
};

/**
 * Generic degenerate-cavity rate equation, loss term included as written:
 *
 *   tau dE_i/dt = g_i K_ii E_i + sum_{j != i} g_j K_ij E_j - g_i E_i,   g_k = exp(G_k - alpha).
 *
 * With K = I the self term and the loss term cancel exactly.
 */
inline FieldVector cavity_derivative(const LaserState& state, const DenseComplexMatrix& K,
                                     const CavityParams& params) {
  const std::size_t n = state.fields.size();
  if (K.size() != n || state.gains.size() != n)
    throw dimension_error("cavity_derivative: K is " + std::to_string(K.size()) + "x" +
                          std::to_string(K.size()) + " but state has " + std::to_string(n) +
                          " lasers");
  FieldVector weighted(n);
  for (std::size_t k = 0; k < n; ++k) weighted[k] = gain_loss(state.gains[k], params.alpha) * state.fields[k];
  FieldVector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Complex sum = K(i, i) * weighted[i];
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum += K(i, j) * weighted[j];
    }
    sum -= weighted[i];
    out[i] = sum / params.tau;
  }
  return out;
}

struct StepOptions {
  Integrator integrator = Integrator::euler;
  PhaseKernel kernel = PhaseKernel::exact;
  /// Field modes only: integrate the gains while holding the fields fixed.
  bool freeze_fields = false;

  friend bool operator==(const StepOptions&, const StepOptions&) = default;
};

namespace detail {

// Joint (fields, gains) state for the field modes.
struct FieldGainRate {
  FieldVector dfields;
  Vector dgains;
};

template <class FieldRate>
inline FieldGainRate field_gain_rate(const LaserState& s, const CavityParams& params, bool freeze,
                                     FieldRate&& field_rate) {
  FieldGainRate r;
  if (freeze)
    r.dfields.assign(s.fields.size(), Complex{0.0, 0.0});
  else
    r.dfields = field_rate(s);
  r.dgains.resize(s.gains.size());
  for (std::size_t k = 0; k < s.gains.size(); ++k) r.dgains[k] = gain_derivative(s.gains[k], s.fields[k], params);
  return r;
}

inline LaserState advance(const LaserState& s, const FieldGainRate& r, double h) {
  LaserState out = s;
  for (std::size_t k = 0; k < out.fields.size(); ++k) out.fields[k] += h * r.dfields[k];
  for (std::size_t k = 0; k < out.gains.size(); ++k) out.gains[k] += h * r.dgains[k];
  return out;
}

template <class FieldRate>
inline LaserState integrate_fields(const LaserState& s, const CavityParams& params,
                                   const StepOptions& opt, FieldRate&& field_rate) {
  const double h = params.dt;
  auto rate = [&](const LaserState& x) {
    return field_gain_rate(x, params, opt.freeze_fields, field_rate);
  };
  LaserState next;
  if (opt.integrator == Integrator::euler) {
    next = advance(s, rate(s), h);
  } else {
    const auto k1 = rate(s);
    const auto k2 = rate(advance(s, k1, h / 2));
    const auto k3 = rate(advance(s, k2, h / 2));
    const auto k4 = rate(advance(s, k3, h));
    next = s;
    for (std::size_t k = 0; k < next.fields.size(); ++k)
      next.fields[k] += h / 6 * (k1.dfields[k] + 2.0 * k2.dfields[k] + 2.0 * k3.dfields[k] + k4.dfields[k]);
    for (std::size_t k = 0; k < next.gains.size(); ++k)
      next.gains[k] += h / 6 * (k1.dgains[k] + 2.0 * k2.dgains[k] + 2.0 * k3.dgains[k] + k4.dgains[k]);
  }
  next.phases.resize(next.fields.size());
  for (std::size_t k = 0; k < next.fields.size(); ++k) next.phases[k] = std::arg(next.fields[k]);
  return next;
}

inline void require_finite(const LaserState& s) {
  for (const auto& f : s.fields)
    if (!std::isfinite(f.real()) || !std::isfinite(f.imag()))
      throw divergence_error("laser field became non-finite");
  for (double g : s.gains)
    if (!std::isfinite(g)) throw divergence_error("gain became non-finite");
  for (double p : s.phases)
    if (!std::isfinite(p)) throw divergence_error("phase became non-finite");
}

} // namespace detail

/**
 * Advances the state by params.dt roundtrips under the solver coupling.
 * Phase-only mode pins every amplitude to D and the gains to their stationary
 * value; full-field mode integrates fields and gains jointly.
 */
inline LaserState step(const LaserState& state, DynamicsMode mode, const LpuProblem& problem,
                       const CavityParams& params, const StepOptions& opt = {}) {
  detail::require_lasers(state.fields.size(), problem.n, "step");
  detail::require_lasers(state.phases.size(), problem.n, "step");
  LaserState next;
  switch (mode) {
  case DynamicsMode::phase_only: {
    const double gstat = stationary_gain(params, params.amplitude);
    const double g = gain_loss(gstat, params.alpha);
    const double h = params.dt / params.tau;
    auto rate = [&](std::span<const double> p) { return phase_derivative(p, problem, g, opt.kernel); };
    next.phases = state.phases;
    if (opt.integrator == Integrator::euler) {
      const Vector k1 = rate(state.phases);
      for (std::size_t i = 1; i < next.phases.size(); ++i) next.phases[i] += h * k1[i];
    } else {
      const std::size_t m = state.phases.size();
      Vector tmp(m);
      auto shifted = [&](const Vector& k, double c) {
        for (std::size_t i = 0; i < m; ++i) tmp[i] = state.phases[i] + c * k[i];
        return rate(tmp);
      };
      const Vector k1 = rate(state.phases);
      const Vector k2 = shifted(k1, h / 2);
      const Vector k3 = shifted(k2, h / 2);
      const Vector k4 = shifted(k3, h);
      for (std::size_t i = 1; i < m; ++i) next.phases[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    next.fields.resize(next.phases.size());
    for (std::size_t i = 0; i < next.phases.size(); ++i) next.fields[i] = std::polar(params.amplitude, next.phases[i]);
    next.gains.assign(next.phases.size(), gstat);
    break;
  }
  case DynamicsMode::full_field: {
    const double inv_tau = 1.0 / params.tau;
    next = detail::integrate_fields(state, params, opt, [&](const LaserState& s) {
      auto d = field_derivative(s, problem, params);
      for (auto& v : d) v *= inv_tau;
      return d;
    });
    break;
  }
  case DynamicsMode::generic_cavity:
    throw argument_error("step: generic cavity mode needs a coupling matrix K, not an LpuProblem");
  }
  detail::require_finite(next);
  return next;
}

/// Generic cavity step: fields by the cavity rate equation, gains by the gain equation.
inline LaserState step(const LaserState& state, const DenseComplexMatrix& K, const CavityParams& params,
                       const StepOptions& opt = {}) {
  if (state.gains.size() != state.fields.size())
    throw dimension_error("step: gains and fields differ in length");
  LaserState next = detail::integrate_fields(
      state, params, opt, [&](const LaserState& s) { return cavity_derivative(s, K, params); });
  detail::require_finite(next);
  return next;
}

/// Largest |phi_i - phi_0| over the problem lasers.
inline double max_phase_offset(std::span<const double> phases) {
  double m = 0.0;
  for (std::size_t i = 1; i < phases.size(); ++i) m = std::max(m, std::abs(phases[i] - phases[0]));
  return m;
}

struct TracePoint {
  std::uint64_t roundtrip = 0;
  double residual = 0.0;
  double max_phase = 0.0;
};

struct RunControls {
  double tol = 1e-5;
  /// Roundtrips between out-of-loop residual checks.
  std::uint64_t check_every = 100;
  /// Cap on cumulative roundtrips over all restarts.
  std::uint64_t max_roundtrips = 200000;
  std::uint64_t max_restarts = 12;
  /**
   * Also restart at a smaller scale when the sine nonlinearity alone would keep
   * the residual above tol (see linearization_defect).
   */
  bool adaptive_scale = true;
  StepOptions step;

  friend bool operator==(const RunControls&, const RunControls&) = default;
};

enum class RunStatus { converged, max_roundtrips };

struct RunResult {
  std::uint64_t roundtrips = 0;
  /// roundtrips * roundtrip_ns; a model time, never wall clock.
  double time_ns = 0.0;
  bool converged = false;
  double final_residual = 0.0;
  std::vector<TracePoint> residual_trace;
  double max_phase_seen = 0.0;
  Vector decoded_x;
  std::uint64_t restarts = 0;
  double final_beta = 0.0;
  /// max |E_i| - min |E_i| over the problem lasers at the end (zero in phase-only mode).
  double amplitude_spread = 0.0;
};

namespace detail {

inline std::uint64_t substeps_per_roundtrip(double dt) {
  if (dt > 1.0) throw argument_error("run: dt must not exceed one roundtrip");
  const double k = std::round(1.0 / dt);
  if (std::abs(k * dt - 1.0) > 1e-12)
    throw argument_error("run: dt must divide one roundtrip evenly (dt = 1/k)");
  return static_cast<std::uint64_t>(k);
}

} // namespace detail

/**
 * Evolves the encoded problem from the aligned state (all phases 0, gains
 * stationary) until the decoded solution meets `tol` against the original
 * system, or the roundtrip cap is reached.
 *
 * Every check_every roundtrips the phases are decoded and the relative
 * residual of (A_orig, b_orig) is evaluated. At a check the scale policy may
 * restart from the aligned state with a smaller beta:
 *  - a phase offset above theta_max halves beta;
 *  - with adaptive_scale, a linearization floor above tol/2 shrinks beta by the
 *    power of two that brings the floor under tol/10 (the floor scales as beta^2).
 * Roundtrips accumulate across restarts. Reaching max_roundtrips returns a
 * non-converged result; running out of restarts throws restart_budget_error.
 */
inline RunResult run(const LpuProblem& problem, const SparseMatrix& A_orig, std::span<const double> b_orig,
                     const CavityParams& params, DynamicsMode mode, const RunControls& controls = {}) {
  params.validate();
  if (mode == DynamicsMode::generic_cavity)
    throw argument_error("run: generic cavity mode has no encoded problem to decode");
  if (!(controls.tol > 0.0)) throw argument_error("run: tol must be positive");
  if (controls.check_every == 0) throw argument_error("run: check_every must be at least 1");
  if (A_orig.rows() != problem.n || A_orig.cols() != problem.n || b_orig.size() != problem.n)
    throw dimension_error("run: original system does not match the encoded problem");
  const std::uint64_t substeps = detail::substeps_per_roundtrip(params.dt);

  RunResult result;
  LpuProblem current = problem;
  LaserState state = LaserState::aligned(problem.n + 1, params);
  std::uint64_t since_restart = 0;

  auto finish = [&](bool converged, double residual) {
    result.converged = converged;
    result.final_residual = residual;
    result.decoded_x = decode(state.phases, current);
    result.final_beta = current.beta;
    result.time_ns = static_cast<double>(result.roundtrips) * params.roundtrip_ns;
    if (mode == DynamicsMode::full_field && problem.n > 0) {
      double lo = std::abs(state.fields[1]), hi = lo;
      for (std::size_t i = 2; i < state.fields.size(); ++i) {
        lo = std::min(lo, std::abs(state.fields[i]));
        hi = std::max(hi, std::abs(state.fields[i]));
      }
      result.amplitude_spread = hi - lo;
    }
    return result;
  };

  auto restart = [&](double factor) {
    if (result.restarts >= controls.max_restarts)
      throw restart_budget_error("run: restart budget of " + std::to_string(controls.max_restarts) +
                                 " exhausted after " + std::to_string(result.roundtrips) +
                                 " roundtrips (beta = " + std::to_string(current.beta) + ")");
    ++result.restarts;
    current = shrink_scale(std::move(current), factor);
    state = LaserState::aligned(problem.n + 1, params);
    since_restart = 0;
  };

  while (result.roundtrips < controls.max_roundtrips) {
    for (std::uint64_t s = 0; s < substeps; ++s) state = step(state, mode, current, params, controls.step);
    ++result.roundtrips;
    ++since_restart;
    const double offset = max_phase_offset(state.phases);
    result.max_phase_seen = std::max(result.max_phase_seen, offset);

    const bool last = result.roundtrips == controls.max_roundtrips;
    if (since_restart % controls.check_every != 0 && !last) continue;

    const Vector x = decode(state.phases, current);
    const double residual = relative_residual(A_orig, x, b_orig);
    result.residual_trace.push_back({result.roundtrips, residual, offset});
    if (!std::isfinite(residual)) throw divergence_error("run: residual became non-finite");
    if (residual <= controls.tol) return finish(true, residual);
    if (last) return finish(false, residual);

    if (offset > current.theta_max) {
      restart(0.5);
      continue;
    }
    if (controls.adaptive_scale && controls.step.kernel == PhaseKernel::exact) {
      const double floor =
          norm2(linearization_defect(state.phases, current)) / norm2(current.drive);
      if (floor > 0.5 * controls.tol) {
        const double halvings = std::max(1.0, std::ceil(0.5 * std::log2(floor / (0.1 * controls.tol))));
        restart(std::exp2(-halvings));
      }
    }
  }
  // max_roundtrips == 0
  return finish(false, relative_residual(A_orig, decode(state.phases, current), b_orig));
}

/// CSV with columns roundtrip,residual,max_phase.
inline void write_trace_csv(std::ostream& out, const RunResult& result) {
  out << "roundtrip,residual,max_phase\n";
  char buf[96];
  for (const auto& p : result.residual_trace) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g\n", static_cast<unsigned long long>(p.roundtrip),
                  p.residual, p.max_phase);
    out << buf;
  }
}

} // namespace lpu

#endif // LPU_DYNAMICS_HPP
