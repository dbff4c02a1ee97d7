// Solves one banded SPD system with CG and with the emulated laser array,
// then prints both solutions side by side.

#include <cstdio>

#include <lpu/dynamics.hpp>
#include <lpu/encoding.hpp>
#include <lpu/generators.hpp>
#include <lpu/krylov.hpp>
#include <lpu/random.hpp>

int main() {
  const auto A = lpu::banded_spd(200, 5, 1);
  const auto b = lpu::random_rhs(A.rows(), 1);

  lpu::SolverSpec cg;
  cg.tol = 1e-5;
  const auto digital = lpu::solve(A, b, cg);

  const auto problem = lpu::encode(A, b);
  const auto optical = lpu::run(problem, A, b, lpu::CavityParams{}, lpu::DynamicsMode::phase_only);

  std::printf("CG:  %zu iterations, residual %.2e, %.0f ns wall clock\n", digital.iterations,
              digital.final_residual, digital.apply_time_ns);
  std::printf("LPU: %llu roundtrips, residual %.2e, %.0f ns model time, beta %g\n",
              static_cast<unsigned long long>(optical.roundtrips), optical.final_residual, optical.time_ns,
              optical.final_beta);
  for (std::size_t i = 0; i < 5; ++i)
    std::printf("x[%zu]  %+.6f  %+.6f\n", i, digital.x[i], optical.decoded_x[i]);
  return optical.converged && digital.converged ? 0 : 1;
}
