#include <gtest/gtest.h>

#include <sstream>

#include <lpu/dynamics.hpp>
#include <lpu/encoding.hpp>
#include <lpu/random.hpp>

#include "support/oracles.hpp"

using namespace lpu;
using cd = std::complex<double>;

namespace {

LpuProblem zero_drive(LpuProblem p) {
  std::fill(p.drive.begin(), p.drive.end(), 0.0);
  return p;
}

LaserState random_state(std::size_t lasers, std::uint64_t seed, double spread = 0.3) {
  NormalStream s(seed);
  LaserState st;
  for (std::size_t k = 0; k < lasers; ++k) {
    const double amp = 1.0 + 0.2 * s();
    const double ph = spread * s();
    st.fields.push_back(std::polar(amp, ph));
    st.gains.push_back(0.1 + 0.05 * s());
    st.phases.push_back(ph);
  }
  return st;
}

} // namespace

TEST(GainLoss, Examples) {
  EXPECT_EQ(gain_loss(0.1, 0.1), 1.0);
  EXPECT_NEAR(gain_loss(0.1 + std::log(2.0), 0.1), 2.0, 1e-15);
  EXPECT_NEAR(gain_loss(0.0, 0.1), 0.90483741803595957, 1e-15);
}

TEST(GainDerivative, Examples) {
  CavityParams p;
  const cd E = std::polar(1.3, 0.4);
  EXPECT_NEAR(gain_derivative(p.pump / (2 * (1 + std::norm(E))), E, p), 0.0, 1e-17);
  EXPECT_EQ(gain_derivative(0.0, 0.0, p), p.pump / p.tau_gain);
  CavityParams q;
  q.pump = 1.0;
  q.tau_gain = 1.0;
  EXPECT_EQ(gain_derivative(0.25, 1.0, q), 0.0);
}

TEST(CavityParams, DefaultsAndValidation) {
  CavityParams p;
  EXPECT_EQ(p.tau, 1.0);
  EXPECT_EQ(p.tau_gain, 10.0);
  EXPECT_EQ(p.alpha, 0.1);
  EXPECT_EQ(p.amplitude, 1.0);
  EXPECT_EQ(p.dt, 1.0);
  EXPECT_EQ(p.roundtrip_ns, 20.0);
  // the default pump puts the stationary gain at alpha, so g = 1 at |E| = D
  EXPECT_NEAR(stationary_gain(p, p.amplitude), p.alpha, 1e-16);
  EXPECT_DOUBLE_EQ(CavityParams::balanced_pump(p.alpha, p.amplitude), p.pump);
  EXPECT_NO_THROW(p.validate());
  for (auto mutate : std::vector<std::function<void(CavityParams&)>>{
           [](CavityParams& c) { c.tau = 0; }, [](CavityParams& c) { c.tau_gain = -1; },
           [](CavityParams& c) { c.dt = 0; }, [](CavityParams& c) { c.alpha = -0.1; },
           [](CavityParams& c) { c.pump = 0; }}) {
    CavityParams c;
    mutate(c);
    EXPECT_THROW(c.validate(), argument_error);
  }
}

TEST(FieldDerivative, ZeroDriveAlignedFieldsAreStationary) {
  const auto A = oracle::random_sparse(6, 0.4, 3, false);
  const auto p = zero_drive(encode(A, random_rhs(6, 1)));
  CavityParams params;
  const auto s = LaserState::aligned(7, params, 0.8);
  for (const auto& d : field_derivative(s, p, params)) EXPECT_LT(std::abs(d), 1e-16);
}

TEST(FieldDerivative, GlobalPhaseEquivariance) {
  const auto A = oracle::random_sparse(5, 0.5, 4, true);
  const auto p = encode(A, random_rhs(5, 2));
  CavityParams params;
  auto s = random_state(6, 9);
  const auto d0 = field_derivative(s, p, params);
  const cd rot = std::polar(1.0, 0.37);
  for (auto& f : s.fields) f *= rot;
  const auto d1 = field_derivative(s, p, params);
  for (std::size_t i = 0; i < d0.size(); ++i) EXPECT_LT(std::abs(d1[i] - rot * d0[i]), 1e-15);
}

TEST(FieldDerivative, DenseComplexOracleTwoLasers) {
  const auto A = from_triplets(2, 2, {{0, 0, 3}, {0, 1, 1}, {1, 0, 1}, {1, 1, 2}});
  const std::vector<double> b{0.5, -1.0};
  const auto p = encode(A, b);
  CavityParams params;
  LaserState s;
  s.fields = {std::polar(1.0, 0.0), cd(0.9, 0.1), cd(1.1, -0.2)};
  s.gains = {0.1, 0.12, 0.07};
  s.phases = {0.0, std::arg(s.fields[1]), std::arg(s.fields[2])};
  const auto d = field_derivative(s, p, params);

  const auto Ad = oracle::to_dense(p.coupling);
  cd g[3];
  for (int k = 0; k < 3; ++k) g[k] = std::exp(s.gains[k] - params.alpha);
  EXPECT_EQ(d[0], cd(0.0, 0.0));
  for (int i = 0; i < 2; ++i) {
    cd expect = 0.0;
    for (int j = 0; j < 2; ++j) expect += Ad[i][j] * g[j + 1] * s.fields[j + 1];
    expect += cd(0, -1) * p.drive[i] * g[i + 1] * s.fields[i + 1];
    expect += p.reference[i] * g[0] * s.fields[0];
    EXPECT_LT(std::abs(d[i + 1] - expect), 1e-14);
  }
  s.fields.pop_back();
  EXPECT_THROW(field_derivative(s, p, params), dimension_error);
}

TEST(PhaseDerivative, ZeroAndGauge) {
  const auto A = oracle::random_sparse(8, 0.3, 5, false);
  const auto p = encode(A, random_rhs(8, 3));
  const auto pz = zero_drive(p);
  for (double v : phase_derivative(Vector(9, 0.4), pz, 1.0)) EXPECT_EQ(v, 0.0);

  Vector phi(9);
  NormalStream s(4);
  for (auto& v : phi) v = 0.2 * s();
  Vector shifted = phi;
  for (auto& v : shifted) v += 1.3;
  const auto d0 = phase_derivative(phi, p, 1.0), d1 = phase_derivative(shifted, p, 1.0);
  for (std::size_t i = 0; i < d0.size(); ++i) EXPECT_NEAR(d0[i], d1[i], 1e-15);
  EXPECT_EQ(d0[0], 0.0);
  EXPECT_THROW(phase_derivative(Vector(3, 0.0), p, 1.0), dimension_error);
}

TEST(PhaseDerivative, CubicRemainderAtScaledSolution) {
  // At phi = beta x* the linear part vanishes; what remains is the sine Taylor remainder,
  // bounded per row by g (sum|a_ij| + |c_i|) t^3 / 6 with t <= 2 beta ||x*||_inf.
  const auto A = oracle::random_sparse(5, 0.6, 6, true);
  const auto b = random_rhs(5, 4);
  const double beta = 1e-3, g = 0.9;
  EncodingConfig cfg;
  cfg.beta_init = beta;
  const auto p = encode(A, b, cfg);
  const auto x = oracle::lu_solve(A, b);
  Vector phi(6, 0.0);
  double xmax = 0.0;
  for (int i = 0; i < 5; ++i) {
    phi[i + 1] = beta * x[i];
    xmax = std::max(xmax, std::abs(x[i]));
  }
  const auto d = phase_derivative(phi, p, g);
  const double t = 2 * beta * xmax;
  for (int i = 0; i < 5; ++i) {
    double budget = std::abs(p.reference[i]);
    for (double v : p.coupling.row_values(i)) budget += std::abs(v);
    EXPECT_LE(std::abs(d[i + 1]), g * budget * t * t * t / 6 + 1e-18);
  }
  // linearized kernel: zero up to round-off
  for (double v : phase_derivative(phi, p, g, PhaseKernel::linearized)) EXPECT_LT(std::abs(v), 1e-17);
}

TEST(CavityDerivative, Examples) {
  CavityParams params;
  params.tau = 2.0;
  const auto s = random_state(4, 12);
  for (const auto& d : cavity_derivative(s, DenseComplexMatrix::identity(4), params)) EXPECT_EQ(d, cd(0, 0));

  const auto decay = cavity_derivative(s, DenseComplexMatrix(4), params);
  for (int i = 0; i < 4; ++i)
    EXPECT_LT(std::abs(decay[i] + std::exp(s.gains[i] - params.alpha) * s.fields[i] / params.tau), 1e-16);

  DenseComplexMatrix K(2);
  K(0, 0) = 0.8;
  K(1, 1) = 0.8;
  K(0, 1) = cd(0.3, 0.1);
  K(1, 0) = cd(0.3, 0.1);
  LaserState two;
  two.fields = {cd(1.0, 0.2), cd(0.7, -0.4)};
  two.gains = {0.15, 0.15};
  two.phases = {0, 0};
  const double g = std::exp(0.15 - params.alpha);
  const auto d = cavity_derivative(two, K, params);
  const cd e0 = (g * 0.8 * two.fields[0] + g * cd(0.3, 0.1) * two.fields[1] - g * two.fields[0]) / 2.0;
  const cd e1 = (g * 0.8 * two.fields[1] + g * cd(0.3, 0.1) * two.fields[0] - g * two.fields[1]) / 2.0;
  EXPECT_LT(std::abs(d[0] - e0), 1e-14);
  EXPECT_LT(std::abs(d[1] - e1), 1e-14);
  EXPECT_THROW(cavity_derivative(two, DenseComplexMatrix(3), params), dimension_error);
}

TEST(Step, StationaryStateIsUnchangedBitForBit) {
  const auto A = oracle::random_sparse(6, 0.4, 8, false);
  const auto p = zero_drive(encode(A, random_rhs(6, 1)));
  CavityParams params;
  const auto s = LaserState::aligned(7, params);
  const auto n = step(s, DynamicsMode::phase_only, p, params);
  EXPECT_EQ(n.phases, s.phases);
  EXPECT_EQ(n.gains, s.gains);
  EXPECT_EQ(n.fields, s.fields);

  const auto c = step(s, DenseComplexMatrix::identity(7), params);
  EXPECT_EQ(c.fields, s.fields);
  EXPECT_EQ(c.gains, s.gains);
}

TEST(Step, PhaseOnlyKeepsAmplitudeAtD) {
  const auto A = oracle::random_sparse(6, 0.4, 8, true);
  const auto p = encode(A, random_rhs(6, 1));
  CavityParams params;
  params.amplitude = 1.7;
  params.pump = CavityParams::balanced_pump(params.alpha, params.amplitude);
  auto s = LaserState::aligned(7, params);
  for (int k = 0; k < 50; ++k) {
    s = step(s, DynamicsMode::phase_only, p, params, {Integrator::rk4});
    for (std::size_t i = 0; i < s.fields.size(); ++i) {
      ASSERT_EQ(std::abs(s.fields[i]), std::abs(std::polar(params.amplitude, s.phases[i])));
      ASSERT_NEAR(std::abs(s.fields[i]), 1.7, 1e-15);
    }
  }
}

TEST(Step, GenericCavityModeNeedsK) {
  const auto p = encode(identity(2), std::vector<double>{1, 1});
  CavityParams params;
  EXPECT_THROW(step(LaserState::aligned(3, params), DynamicsMode::generic_cavity, p, params), argument_error);
}

TEST(Step, GenericCavityDecayWithZeroCoupling) {
  CavityParams params;
  auto s = random_state(3, 5);
  const auto before = s;
  StepOptions opt;
  opt.freeze_fields = false;
  s = step(s, DenseComplexMatrix(3), params, opt);
  for (int i = 0; i < 3; ++i) {
    const double g = std::exp(before.gains[i] - params.alpha);
    EXPECT_LT(std::abs(s.fields[i] - before.fields[i] * (1.0 - g)), 1e-15);
  }
}

TEST(Step, NonFiniteStateSignalsDivergence) {
  const auto p = encode(identity(2), std::vector<double>{1, 1});
  CavityParams params;
  auto s = LaserState::aligned(3, params);
  s.phases[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(step(s, DynamicsMode::phase_only, p, params), divergence_error);
  auto f = LaserState::aligned(3, params);
  f.fields[2] = cd(std::numeric_limits<double>::infinity(), 0);
  EXPECT_THROW(step(f, DynamicsMode::full_field, p, params), divergence_error);
}

TEST(Step, EulerLinearizedPhaseFlowIsRichardson) {
  const std::size_t n = 10;
  const auto A = oracle::random_sparse(n, 0.3, 17, true);
  const auto b = random_rhs(n, 6);
  const auto p = encode(A, b);
  CavityParams params;
  params.dt = 0.5;
  const double g = gain_loss(stationary_gain(params, params.amplitude), params.alpha);
  const double omega = params.dt / params.tau * g / p.sigma;
  const auto D = oracle::to_dense(A);

  StepOptions opt{Integrator::euler, PhaseKernel::linearized};
  auto s = LaserState::aligned(n + 1, params);
  std::vector<double> x(n, 0.0);
  for (int it = 0; it < 200; ++it) {
    s = step(s, DynamicsMode::phase_only, p, params, opt);
    const auto Ax = oracle::matvec(D, x);
    for (std::size_t i = 0; i < n; ++i) x[i] += omega * (b[i] - Ax[i]);
    const auto xd = decode(s.phases, p);
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(xd[i], x[i], 1e-12 * std::max(1.0, std::abs(x[i]))) << it;
  }
}

TEST(Step, Rk4AndEulerAgreeOnFullField) {
  const std::size_t n = 5;
  const auto A = oracle::random_sparse(n, 0.5, 23, true);
  const auto b = random_rhs(n, 7);
  const auto p = encode(A, b);
  CavityParams params;
  params.dt = 0.1;
  auto e = LaserState::aligned(n + 1, params), r = e;
  for (int k = 0; k < 1000; ++k) {
    e = step(e, DynamicsMode::full_field, p, params, {Integrator::euler});
    r = step(r, DynamicsMode::full_field, p, params, {Integrator::rk4});
  }
  const auto xe = decode(e.phases, p), xr = decode(r.phases, p);
  for (std::size_t i = 0; i < n; ++i) EXPECT_LE(std::abs(xe[i] - xr[i]), 1e-4);
}

TEST(Step, FrozenFieldsDriveGainsToStationaryValue) {
  const auto p = encode(identity(4), std::vector<double>{1, 2, 3, 4});
  CavityParams params;
  auto s = random_state(5, 21);
  for (auto& g : s.gains) g = 0.0;
  const auto fields = s.fields;
  StepOptions opt;
  opt.freeze_fields = true;
  for (int k = 0; k < 400; ++k) s = step(s, DynamicsMode::full_field, p, params, opt);
  EXPECT_EQ(s.fields, fields);
  for (std::size_t i = 0; i < s.gains.size(); ++i)
    EXPECT_NEAR(s.gains[i], params.pump / (2 * (1 + std::norm(fields[i]))), 1e-10);
}

TEST(Step, GaugeShiftLeavesPhaseDifferencesInvariant) {
  const std::size_t n = 12;
  const auto A = oracle::random_sparse(n, 0.3, 31, true);
  const auto p = encode(A, random_rhs(n, 2));
  CavityParams params;
  auto a = LaserState::aligned(n + 1, params, 0.0), b = LaserState::aligned(n + 1, params, 0.7);
  for (int k = 0; k < 1000; ++k) {
    a = step(a, DynamicsMode::phase_only, p, params);
    b = step(b, DynamicsMode::phase_only, p, params);
    for (std::size_t i = 1; i <= n; ++i)
      ASSERT_NEAR(a.phases[i] - a.phases[0], b.phases[i] - b.phases[0], 1e-12);
  }
}

TEST(Run, IdentitySystem) {
  const auto A = identity(2);
  const std::vector<double> b{0.5, -0.3};
  const auto r = oracle::run_checked(encode(A, b), A, b, {}, DynamicsMode::phase_only, {}, "identity");
  ASSERT_TRUE(r.converged);
  EXPECT_LE(r.final_residual, 1e-5);
  EXPECT_NEAR(r.decoded_x[0], 0.5, 1e-5);
  EXPECT_NEAR(r.decoded_x[1], -0.3, 1e-5);
  EXPECT_EQ(r.time_ns, static_cast<double>(r.roundtrips) * 20.0);
  EXPECT_EQ(r.roundtrips % 100, 0u);
}

TEST(Run, DiagDominantSpd50) {
  const auto A = oracle::random_sparse(50, 0.1, 77, true);
  const auto b = random_rhs(50, 3);
  const auto r = oracle::run_checked(encode(A, b), A, b, {}, DynamicsMode::phase_only, {}, "n50");
  ASSERT_TRUE(r.converged);
  EXPECT_LE(r.final_residual, 1e-5);
  EXPECT_LE(oracle::rel_error(r.decoded_x, oracle::lu_solve(A, b)), 1e-4);
  EXPECT_LE(r.max_phase_seen, 0.3);
  ASSERT_FALSE(r.residual_trace.empty());
  EXPECT_EQ(r.residual_trace.back().residual, r.final_residual);
}

TEST(Run, FullFieldConverges) {
  const auto A = oracle::random_sparse(8, 0.4, 5, true);
  const auto b = random_rhs(8, 9);
  const auto r = oracle::run_checked(encode(A, b), A, b, {}, DynamicsMode::full_field, {}, "full field");
  ASSERT_TRUE(r.converged);
  EXPECT_LE(oracle::rel_error(r.decoded_x, oracle::lu_solve(A, b)), 1e-4);
  EXPECT_GE(r.amplitude_spread, 0.0);
}

TEST(Run, AsWrittenSignFailsOnSpd) {
  // Gershgorin: every eigenvalue of this diagonally dominant SPD matrix is >= 1 > 0,
  // so the literal-sign linear flow has only growing modes.
  const auto A = oracle::random_sparse(5, 0.5, 19, true);
  for (std::size_t i = 0; i < 5; ++i) {
    double off = 0.0;
    for (std::size_t k = 0; k < A.row_cols(i).size(); ++k)
      if (A.row_cols(i)[k] != i) off += std::abs(A.row_values(i)[k]);
    ASSERT_GE(A.at(i, i) - off, 1.0 - 1e-12);
  }
  const auto b = random_rhs(5, 1);
  EncodingConfig cfg;
  cfg.sign = SignConvention::as_written;
  RunControls c;
  c.max_restarts = 6;
  bool failed = false;
  try {
    const auto r = oracle::run_checked(encode(A, b, cfg), A, b, {}, DynamicsMode::phase_only, c, "as written");
    failed = !r.converged;
  } catch (const restart_budget_error&) {
    failed = true;
  } catch (const divergence_error&) {
    failed = true;
  }
  EXPECT_TRUE(failed);
}

TEST(Run, FieldOverflowIsReportedAsDivergence) {
  const auto A = oracle::random_sparse(4, 0.5, 2, true);
  const auto b = random_rhs(4, 1);
  EncodingConfig cfg;
  cfg.sign = SignConvention::as_written;
  RunControls c;
  c.check_every = 100000;
  EXPECT_THROW(lpu::run(encode(A, b, cfg), A, b, {}, DynamicsMode::full_field, c), divergence_error);
}

TEST(Run, LargeBetaTriggersRestarts) {
  const auto A = oracle::random_sparse(10, 0.3, 41, true);
  const auto b = random_rhs(10, 2);
  EncodingConfig cfg;
  cfg.beta_init = 2.0;
  const auto r = oracle::run_checked(encode(A, b, cfg), A, b, {}, DynamicsMode::phase_only, {}, "restart");
  ASSERT_TRUE(r.converged);
  EXPECT_GE(r.restarts, 1u);
  EXPECT_LT(r.final_beta, 2.0);
  EXPECT_LE(oracle::rel_error(r.decoded_x, oracle::lu_solve(A, b)), 1e-4);
}

TEST(Run, RestartBudgetExhaustion) {
  const auto A = oracle::random_sparse(10, 0.3, 41, true);
  const auto b = random_rhs(10, 2);
  EncodingConfig cfg;
  cfg.beta_init = 50.0;
  RunControls c;
  c.max_restarts = 1;
  EXPECT_THROW(lpu::run(encode(A, b, cfg), A, b, {}, DynamicsMode::phase_only, c), restart_budget_error);
}

TEST(Run, RoundtripCapGivesNonConvergedResult) {
  const auto A = oracle::random_sparse(10, 0.3, 41, true);
  const auto b = random_rhs(10, 2);
  RunControls c;
  c.tol = 1e-30;
  c.adaptive_scale = false;
  c.max_roundtrips = 250;
  const auto r = oracle::run_checked(encode(A, b), A, b, {}, DynamicsMode::phase_only, c, "cap");
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.roundtrips, 250u);
  EXPECT_EQ(r.time_ns, 5000.0);
  EXPECT_EQ(r.residual_trace.back().roundtrip, 250u);
}

TEST(Run, SubRoundtripStepsCountWholeRoundtrips) {
  const auto A = oracle::random_sparse(6, 0.4, 3, true);
  const auto b = random_rhs(6, 2);
  CavityParams params;
  params.dt = 0.25;
  const auto r = oracle::run_checked(encode(A, b), A, b, params, DynamicsMode::phase_only, {}, "dt 0.25");
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.time_ns, static_cast<double>(r.roundtrips) * 20.0);
  params.dt = 0.3;
  EXPECT_THROW(lpu::run(encode(A, b), A, b, params, DynamicsMode::phase_only), argument_error);
}

TEST(Run, ArgumentChecks) {
  const auto A = identity(3);
  const std::vector<double> b{1, 2, 3};
  const auto p = encode(A, b);
  RunControls c;
  c.tol = 0;
  EXPECT_THROW(lpu::run(p, A, b, {}, DynamicsMode::phase_only, c), argument_error);
  EXPECT_THROW(lpu::run(p, A, b, {}, DynamicsMode::generic_cavity), argument_error);
  EXPECT_THROW(lpu::run(p, identity(2), std::vector<double>{1, 2}, {}, DynamicsMode::phase_only), dimension_error);
}

TEST(Run, DecodeErrorShrinksWithBeta) {
  const auto A = oracle::random_sparse(10, 0.3, 55, true);
  const auto b = random_rhs(10, 4);
  const auto x = oracle::lu_solve(A, b);
  RunControls c;
  c.adaptive_scale = false;
  c.tol = 1e-14;
  c.max_roundtrips = 3000;
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {0.1, 0.05, 0.01}) {
    EncodingConfig cfg;
    cfg.beta_init = beta;
    const auto r = oracle::run_checked(encode(A, b, cfg), A, b, {}, DynamicsMode::phase_only, c, "monotone");
    const double err = oracle::rel_error(r.decoded_x, x);
    EXPECT_LE(err, prev) << "beta " << beta;
    prev = err;
  }
}

TEST(Run, TraceCsv) {
  const auto A = identity(2);
  const std::vector<double> b{0.5, -0.3};
  const auto r = oracle::run_checked(encode(A, b), A, b, {}, DynamicsMode::phase_only, {}, "csv");
  std::ostringstream out;
  write_trace_csv(out, r);
  const auto text = out.str();
  EXPECT_EQ(text.rfind("roundtrip,residual,max_phase\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), r.residual_trace.size() + 1);
}

TEST(Run, Deterministic) {
  const auto A = oracle::random_sparse(20, 0.2, 8, true);
  const auto b = random_rhs(20, 8);
  const auto r1 = oracle::run_checked(encode(A, b), A, b, {}, DynamicsMode::phase_only, {}, "det a");
  const auto r2 = oracle::run_checked(encode(A, b), A, b, {}, DynamicsMode::phase_only, {}, "det b");
  EXPECT_EQ(r1.decoded_x, r2.decoded_x);
  EXPECT_EQ(r1.roundtrips, r2.roundtrips);
}
