#include <gtest/gtest.h>

#include <lpu/krylov.hpp>
#include <lpu/random.hpp>

#include "support/oracles.hpp"

using namespace lpu;

namespace {

std::vector<SolverSpec> all_kinds(double tol = 1e-5) {
  return {{Cg{}, tol}, {Gmres{}, tol}, {BiCgStab{}, tol}, {Richardson{1.0}, tol}};
}

} // namespace

TEST(SolverSpec, ValidationAndLabels) {
  EXPECT_NO_THROW(SolverSpec{}.validate());
  EXPECT_THROW((SolverSpec{Cg{}, 0.0}.validate()), argument_error);
  EXPECT_THROW((SolverSpec{Gmres{0}}.validate()), argument_error);
  EXPECT_THROW((SolverSpec{Richardson{0.0}}.validate()), argument_error);
  EXPECT_EQ(solver_label(Cg{}), "cg");
  EXPECT_EQ(solver_label(Gmres{}), "gmres(30)");
  EXPECT_EQ(solver_label(BiCgStab{}), "bicgstab");
  EXPECT_EQ(solver_label(Richardson{0.5}), "richardson(0.5)");
  EXPECT_EQ(SolverSpec{}.tol, 1e-5);
}

TEST(Solve, IdentityConvergesInOneIteration) {
  const auto A = identity(6);
  const auto b = random_rhs(6, 3);
  for (const auto& spec : all_kinds()) {
    const auto out = solve(A, b, spec);
    EXPECT_TRUE(out.converged) << solver_label(spec.kind);
    EXPECT_EQ(out.iterations, 1u) << solver_label(spec.kind);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(out.x[i], b[i], 1e-15);
    EXPECT_EQ(out.reason, StopReason::converged);
  }
}

TEST(Cg, TwoByTwo) {
  const auto A = from_triplets(2, 2, {{0, 0, 4}, {0, 1, 1}, {1, 0, 1}, {1, 1, 3}});
  const std::vector<double> b{1, 2};
  const auto out = cg(A, b, 1e-12, 100);
  const auto ref = oracle::lu_solve(A, b);
  EXPECT_TRUE(out.converged);
  EXPECT_LE(out.iterations, 2u);
  EXPECT_NEAR(out.x[0], 1.0 / 11, 1e-12);
  EXPECT_NEAR(out.x[1], 7.0 / 11, 1e-12);
  EXPECT_NEAR(ref[0], 1.0 / 11, 1e-15);
}

TEST(Solve, MatchesDenseLu) {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const std::size_t n = 8 * seed;
    const bool sym = seed % 2 == 1;
    const auto A = oracle::random_sparse(n, 0.15, seed, sym, 2.0);
    const auto b = random_rhs(n, seed);
    const auto x = oracle::lu_solve(A, b);
    std::vector<SolverSpec> specs = {{Gmres{}}, {BiCgStab{}}};
    if (sym) specs.push_back({Cg{}});
    for (const auto& spec : specs) {
      const auto out = solve(A, b, spec);
      ASSERT_TRUE(out.converged) << solver_label(spec.kind) << " n=" << n;
      EXPECT_LE(out.final_residual, 1e-5);
      EXPECT_LE(relative_residual(A, out.x, b), 1e-5);
      EXPECT_LE(oracle::rel_error(out.x, x), 1e-4) << solver_label(spec.kind) << " n=" << n;
    }
  }
}

TEST(Cg, TerminatesWithinNIterations) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const std::size_t n = 10 * seed;
    const auto A = oracle::random_sparse(n, 0.1, seed, true);
    const auto out = cg(A, random_rhs(n, seed), 1e-5, 10 * n);
    EXPECT_TRUE(out.converged);
    EXPECT_LE(out.iterations, n);
  }
}

TEST(Cg, ErrorANormIsNonIncreasing) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::size_t n = 6 * seed;
    const auto A = oracle::random_sparse(n, 0.3, seed + 40, true);
    const auto b = random_rhs(n, seed);
    const auto x = oracle::lu_solve(A, b);
    const auto D = oracle::to_dense(A);
    auto a_norm = [&](std::span<const double> xk) {
      std::vector<double> e(n);
      for (std::size_t i = 0; i < n; ++i) e[i] = xk[i] - x[i];
      const auto Ae = oracle::matvec(D, e);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += e[i] * Ae[i];
      return std::sqrt(s);
    };
    double prev = a_norm(std::vector<double>(n, 0.0));
    cg(A, b, 1e-12, 10 * n, [&](std::size_t, std::span<const double> xk) {
      const double cur = a_norm(xk);
      EXPECT_LE(cur, prev * (1 + 1e-12) + 1e-14);
      prev = cur;
    });
  }
}

TEST(Gmres, ResidualHistoryIsNonIncreasing) {
  for (std::size_t restart : {5u, 30u}) {
    const auto A = oracle::random_sparse(60, 0.1, 13, false, 0.5);
    const auto out = gmres(A, random_rhs(60, 2), restart, 1e-10, 2000);
    EXPECT_TRUE(out.converged);
    for (std::size_t k = 1; k < out.residual_history.size(); ++k)
      EXPECT_LE(out.residual_history[k], out.residual_history[k - 1] * (1 + 1e-10));
  }
}

TEST(Solve, BitwiseDeterministic) {
  const auto A = oracle::random_sparse(80, 0.1, 3, false);
  const auto b = random_rhs(80, 1);
  for (const auto& spec : all_kinds()) {
    if (std::holds_alternative<Cg>(spec.kind) || std::holds_alternative<Richardson>(spec.kind)) continue;
    const auto a = solve(A, b, spec), c = solve(A, b, spec);
    EXPECT_EQ(a.iterations, c.iterations);
    EXPECT_EQ(a.x, c.x);
    EXPECT_EQ(a.final_residual, c.final_residual);
  }
}

TEST(Richardson, SpectralContraction) {
  const auto A = from_triplets(3, 3, {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}});
  const std::vector<double> b{1, 1, 1};
  const auto ok = richardson(A, b, 0.5, 1e-10, 1000);
  EXPECT_TRUE(ok.converged);
  // rho = 0.5: each step halves the error in every component
  EXPECT_LE(ok.iterations, 40u);
  EXPECT_NEAR(ok.x[2], 1.0 / 3, 1e-9);

  const auto bad = richardson(from_triplets(2, 2, {{0, 0, 1}, {1, 1, 3}}), std::vector<double>{1, 1}, 1.0, 1e-10, 1000);
  EXPECT_FALSE(bad.converged);
  EXPECT_EQ(bad.reason, StopReason::diverged);
  EXPECT_LT(bad.iterations, 20u);
}

TEST(Solve, BreakdownIsReportedDistinctly) {
  const auto indefinite = from_triplets(2, 2, {{0, 0, 1}, {1, 1, -1}});
  const auto c = cg(indefinite, std::vector<double>{1, 1}, 1e-8, 10);
  EXPECT_FALSE(c.converged);
  EXPECT_EQ(c.reason, StopReason::breakdown);

  const auto swap = from_triplets(2, 2, {{0, 1, 1}, {1, 0, 1}});
  const auto s = bicgstab(swap, std::vector<double>{1, 0}, 1e-8, 10);
  EXPECT_FALSE(s.converged);
  EXPECT_EQ(s.reason, StopReason::breakdown);
}

TEST(Solve, IterationCapAndErrors) {
  const auto A = oracle::random_sparse(50, 0.2, 9, false, 0.1);
  const auto out = solve(A, random_rhs(50, 1), {Gmres{2}, 1e-12, 3});
  EXPECT_FALSE(out.converged);
  EXPECT_EQ(out.reason, StopReason::max_iterations);
  EXPECT_LE(out.iterations, 3u);
  EXPECT_THROW(solve(A, std::vector<double>(50, 0.0), {}), argument_error);
  EXPECT_THROW(solve(A, std::vector<double>(3, 1.0), {}), dimension_error);
  EXPECT_THROW(solve(from_triplets(2, 3, {}), std::vector<double>(2, 1.0), {}), dimension_error);
}

TEST(Solve, ConvergedImpliesTrueResidualWithinTol) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto A = oracle::random_sparse(40, 0.2, seed, seed % 2 == 0, 0.2);
    const auto b = random_rhs(40, seed);
    for (const auto& spec : all_kinds()) {
      const auto out = solve(A, b, spec);
      if (out.converged) {
        EXPECT_LE(out.final_residual, spec.tol);
        EXPECT_EQ(out.final_residual, relative_residual(A, out.x, b));
      }
      EXPECT_GE(out.apply_time_ns, 0.0);
    }
  }
}
