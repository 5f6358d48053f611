#pragma once

// Dirichlet Poisson solves and the reduction map u -> Phi_u.

#include <spbvp/errors.hpp>
#include <spbvp/grid.hpp>
#include <spbvp/krylov.hpp>
#include <spbvp/problem.hpp>

#include <string>

namespace spbvp {

inline constexpr double default_poisson_tol = 1e-10;

/// Solves A phi = rhs by unpreconditioned CG from zero, to
/// ||A phi - rhs||_2 <= tol ||rhs||_2. Iteration cap 10 n^3.
inline GridFunction solve_poisson(const GridFunction& rhs, double tol = default_poisson_tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("poisson tolerance must be positive");
  const int cap = static_cast<int>(10 * rhs.grid().node_count());
  krylov::Stats stats;
  GridFunction phi = krylov::cg([](const GridFunction& x) { return apply_laplacian(x); }, rhs, tol, cap,
                                &stats);
  if (!stats.converged) {
    throw SolverError(SolverErrorKind::no_convergence,
                      "CG stopped after " + std::to_string(stats.iterations) + " iterations");
  }
  return phi;
}

/// Right-hand side 2 q F(u) of the second equation. In P_r mode this is
/// (2q/r)|u|^r, since F(u) = |u|^r / r.
inline GridFunction reduction_rhs(const GridFunction& u, const ProblemSpec& spec) {
  const double two_q = 2.0 * spec.q;
  const Nonlinearity& nl = spec.nonlinearity;
  return map(u, [&](double s) { return two_q * nl.F(s); });
}

/// Phi_u solving -Lap Phi = 2 q F(u) with zero boundary data.
inline GridFunction reduction_map(const GridFunction& u, const ProblemSpec& spec,
                                  double tol = default_poisson_tol) {
  return solve_poisson(reduction_rhs(u, spec), tol);
}

/// Phi'_u[v] solving -Lap Phi' = 2 q f(u) v.
inline GridFunction reduction_derivative_apply(const GridFunction& u, const GridFunction& v,
                                               const ProblemSpec& spec,
                                               double tol = default_poisson_tol) {
  const double two_q = 2.0 * spec.q;
  GridFunction rhs(u.grid());
  for (std::size_t i = 0; i < u.size(); ++i) rhs[i] = two_q * spec.nonlinearity.f(u[i]) * v[i];
  return solve_poisson(rhs, tol);
}

}  // namespace spbvp
