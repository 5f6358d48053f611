#include <spbvp/minimax.hpp>

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdio>

using namespace spbvp;

namespace {

// Residual A u - |u|^(p-1) u of the decoupled Lane-Emden system, dense.
Eigen::VectorXd lane_emden_residual(const Eigen::MatrixXd& A, const Eigen::VectorXd& u) {
  return A * u - u.cwiseAbs2().cwiseProduct(u);
}

// Damped Newton on A u = u^3 with a dense Jacobian, independent of the
// matrix-free solver stack.
GridFunction lane_emden_dense_newton(const Grid& g, GridFunction start) {
  const Eigen::MatrixXd A = testkit::dense_laplacian(g);
  Eigen::VectorXd u = testkit::to_eigen(start);
  Eigen::VectorXd F = lane_emden_residual(A, u);
  for (int it = 0; it < 200 && F.norm() > 1e-11 * A.norm(); ++it) {
    Eigen::MatrixXd J = A;
    J.diagonal() -= 3.0 * u.cwiseAbs2();
    const Eigen::VectorXd d = J.fullPivLu().solve(-F);
    double a = 1.0;
    for (int k = 0; k < 40; ++k, a *= 0.5) {
      const Eigen::VectorXd trial = u + a * d;
      const Eigen::VectorXd Ft = lane_emden_residual(A, trial);
      if (Ft.norm() < (1.0 - 1e-4 * a) * F.norm()) {
        u = trial;
        F = Ft;
        break;
      }
    }
  }
  return testkit::from_eigen(g, u);
}

ProblemSpec existence_spec(int n) {
  return ProblemSpec::general_mode(Grid(n, 12.0), 1, 1, 3.0, 0.05, Nonlinearity::critical(), 10.0);
}

ProblemSpec coercive_spec(int n) { return ProblemSpec::p_r_mode(Grid(n, 1.0), 4.0, 20.0, 2.0); }

SolverConfig coercive_config() {
  SolverConfig cfg;
  cfg.method = Method::descent;
  cfg.init_amplitude = 16.0;
  return cfg;
}

bool bitwise_equal(const GridFunction& a, const GridFunction& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

void expect_coupled_system(const SolveReport& r, const ProblemSpec& spec, double tol) {
  EXPECT_LE(r.residual, tol);
  EXPECT_LT(testkit::rel_diff(r.solution_phi, reduction_map(r.solution_u, spec)), 1e-8);
  const GridFunction Fu = map(r.solution_u, [&](double s) { return spec.nonlinearity.F(s); });
  const double lhs = inner(r.solution_phi, apply_laplacian(r.solution_phi));
  const double rhs = 2.0 * spec.q * inner(Fu, r.solution_phi);
  EXPECT_LE(std::abs(lhs - rhs), 1e-8 * std::max(std::abs(rhs), 1e-300));
}

}  // namespace

TEST(SolverConfig, DefaultsAndValidation) {
  SolverConfig cfg;
  EXPECT_EQ(cfg.path_points, 33);
  EXPECT_EQ(cfg.method, Method::mp_then_newton);
  EXPECT_NO_THROW(cfg.validate());
  cfg.path_points = 7;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SolverConfig{};
  cfg.residual_tol = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SolverConfig{};
  cfg.descent_step = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SolverConfig{};
  cfg.cluster_tol = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  for (Method m : {Method::mountain_pass, Method::descent, Method::newton, Method::mp_then_newton})
    EXPECT_EQ(method_from_string(to_string(m)), m);
  EXPECT_THROW(method_from_string("simplex"), std::invalid_argument);
}

TEST(ArmijoAccept, ResolutionRule) {
  EXPECT_TRUE(detail::armijo_accept(0.9, 1.0, 0.05));
  EXPECT_FALSE(detail::armijo_accept(0.97, 1.0, 0.05));
  EXPECT_FALSE(detail::armijo_accept(1.0, 1.0, 0.05));
  // Below the resolution only non-increase within 1e-12 is demanded.
  EXPECT_TRUE(detail::armijo_accept(1.0 + 5e-13, 1.0, 1e-14));
  EXPECT_FALSE(detail::armijo_accept(1.0 + 5e-12, 1.0, 1e-14));
}

TEST(Parity, DetectAndProject) {
  const Grid g(8, 1.0);
  const Parity e211 = Parity::detect(eigenfunction(g, 2, 1, 1));
  EXPECT_EQ(e211.axis, (std::array<int, 3>{-1, 1, 1}));
  const Parity e111 = Parity::detect(eigenfunction(g, 1, 1, 1));
  EXPECT_EQ(e111.axis, (std::array<int, 3>{1, 1, 1}));
  testkit::Rng rng(9);
  const GridFunction u = testkit::random_field(g, rng);
  EXPECT_TRUE(Parity::detect(u).trivial());
  // Projection is idempotent, lands in the class and is orthogonal.
  const GridFunction pu = e211.project(u);
  EXPECT_TRUE(bitwise_equal(e211.project(pu), pu));
  EXPECT_EQ(Parity::detect(pu, 0.0).axis, e211.axis);
  EXPECT_NEAR(dot(u - pu, pu), 0.0, 1e-12 * dot(u, u));
  // Odd center plane is zeroed on an odd grid.
  const Grid go(7, 1.0);
  Parity odd_x;
  odd_x.axis = {-1, 0, 0};
  const GridFunction q = odd_x.project(testkit::random_field(go, rng));
  for (int k = 0; k < 7; ++k)
    for (int j = 0; j < 7; ++j) EXPECT_EQ(q.at(3, j, k), 0.0);
}

TEST(Parity, GradientPreservesClass) {
  const Grid g(9, 1.0);
  const auto spec = ProblemSpec::p_r_mode(g, 3.0, 1.0, 3.0);
  const Parity par = Parity::detect(eigenfunction(g, 1, 2, 1));
  testkit::Rng rng(3);
  const GridFunction u = par.project(testkit::random_smooth_field(g, rng, 3.0));
  const GridFunction grad = gradient(u, spec);
  EXPECT_LT(testkit::rel_diff(par.project(grad), grad), 1e-12);
}

TEST(FindEndpoint, LinearCouplingReachesNegativeEnergyAtSmallestDoubling) {
  const Grid g(9, 1.0);
  const auto spec = ProblemSpec::general_mode(g, 1, 1, 3.0, 0.05, Nonlinearity::linear());
  const GridFunction e1 = eigenfunction(g, 1, 1, 1);
  const GridFunction ubar = find_endpoint(spec, e1, 1.0);
  EXPECT_LT(energy(ubar, spec), 0.0);
  // ubar is a positive multiple t e1 / ||e1|| with t a power of two.
  const double t = h10_norm(ubar);
  const double k = std::log2(t);
  EXPECT_NEAR(k, std::round(k), 1e-9);
  EXPECT_LT(testkit::rel_diff(ubar, (t / h10_norm(e1)) * e1), 1e-14);
  if (t > 1.0) {
    EXPECT_GE(energy((0.5 * t / h10_norm(e1)) * e1, spec), 0.0);
  }

  // Doubling the starting scale keeps existence.
  for (double s0 : {2.0, 4.0, 0.25}) {
    const GridFunction other = find_endpoint(spec, e1, s0);
    EXPECT_LT(energy(other, spec), 0.0) << s0;
  }
  EXPECT_THROW(find_endpoint(spec, GridFunction(g), 1.0), std::invalid_argument);
}

TEST(FindEndpoint, CoercivePrModeHasNoNegativeEndpoint) {
  // r = 2 < (p + 1) / 2 = 2.5 with small q: bounded below and positive on rays.
  const Grid g(7, 1.0);
  const auto spec = ProblemSpec::p_r_mode(g, 4.0, 0.1, 2.0);
  const GridFunction e1 = eigenfunction(g, 1, 1, 1);
  try {
    find_endpoint(spec, e1, 1.0);
    FAIL() << "expected no negative endpoint";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverErrorKind::no_negative_endpoint);
  }
  // The sweep values themselves are positive and increase.
  const GridFunction v = (1.0 / h10_norm(e1)) * e1;
  double prev = 0.0;
  for (int k = 0; k <= 40; ++k) {
    const double e = energy(std::ldexp(1.0, k) * v, spec);
    EXPECT_GT(e, 0.0) << k;
    EXPECT_GT(e, prev) << k;
    prev = e;
  }
}

TEST(MountainPass, ExistenceRegimeSolutionWithMonotoneLevel) {
  const auto spec = existence_spec(9);
  SolverConfig cfg;
  cfg.method = Method::mountain_pass;
  cfg.residual_tol = 1e-6;
  const SolveReport r = mountain_pass(spec, cfg);
  expect_coupled_system(r, spec, cfg.residual_tol);
  EXPECT_GT(r.energy_value, 0.0);
  EXPECT_LE(h10_norm(r.solution_u), 10.0);
  EXPECT_FALSE(r.truncation_active);
  EXPECT_TRUE(is_nontrivial(r, cfg));
  ASSERT_TRUE(r.mp_level_estimate.has_value());
  EXPECT_EQ(*r.mp_level_estimate, r.energy_value);
  ASSERT_GE(r.trace.size(), 2u);
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    EXPECT_LE(r.trace[i].energy, r.trace[i - 1].energy * (1.0 + 1e-12)) << i;
  }
  EXPECT_EQ(r.trace.back().residual, r.residual);
  std::printf("  level %.10g after %d iterations, ||u||_H10 = %.4g\n", r.energy_value, r.iterations,
              h10_norm(r.solution_u));
}

TEST(MountainPass, ResumableWithTighterTolerance) {
  const auto spec = existence_spec(7);
  SolverConfig cfg;
  MountainPass mp(spec, cfg, find_endpoint(spec, eigenfunction(spec.grid, 1, 1, 1)));
  mp.run(1e-2);
  const double coarse_level = mp.level();
  const int coarse_iters = mp.iterations();
  EXPECT_LE(mp.residual(), 1e-2);
  mp.run(1e-6);
  EXPECT_LE(mp.residual(), 1e-6);
  EXPECT_LE(mp.level(), coarse_level * (1.0 + 1e-12));
  EXPECT_GE(mp.iterations(), coarse_iters);
  // The current ray peaks at the selected point (node N/2 of the diagnostic ray).
  const auto e = mp.ray_energies();
  ASSERT_EQ(e.size(), static_cast<std::size_t>(cfg.path_points + 1));
  EXPECT_EQ(e.front(), 0.0);
  const auto peak = std::max_element(e.begin(), e.end()) - e.begin();
  EXPECT_LE(std::abs(peak - cfg.path_points / 2), 1);
}

TEST(MountainPass, DecoupledLaneEmdenMatchesDenseNewton) {
  const Grid g(7, 1.0);
  const auto spec = ProblemSpec::general_mode(g, 1, 1, 3.0, 0.0, Nonlinearity::critical());
  SolverConfig cfg;
  cfg.residual_tol = 1e-10;
  SolveReport r = mp_then_newton(spec, cfg);
  EXPECT_LE(r.residual, 1e-10);
  normalize_sign(r);
  for (double v : r.solution_u.values()) EXPECT_GT(v, 0.0);

  // Positive bump scaled to the eigenvalue level, max u^2 ~ 2 lambda_1.
  GridFunction start = gaussian_bump(g);
  start *= std::sqrt(2.0 * smallest_eigenvalue(g)) / max_abs(start);
  const GridFunction oracle = lane_emden_dense_newton(g, start);
  ASSERT_GT(max_abs(oracle), 1.0);
  EXPECT_LE(lp_norm(r.solution_u - oracle, 2.0), 1e-6);
}

TEST(MountainPass, PrModeSuperlinearRegime) {
  const auto spec = ProblemSpec::p_r_mode(Grid(9, 1.0), 3.0, 1.0, 3.0);
  SolverConfig cfg;
  const SolveReport r = run_solver(spec, cfg);
  expect_coupled_system(r, spec, cfg.residual_tol);
  EXPECT_TRUE(is_nontrivial(r, cfg));
  EXPECT_GT(r.energy_value, 0.0);
}

TEST(MountainPass, DeterministicAndSignSymmetric) {
  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 3.0, 1.0, 3.0);
  SolverConfig cfg;
  const SolveReport a = run_solver(spec, cfg);
  const SolveReport b = run_solver(spec, cfg);
  EXPECT_TRUE(bitwise_equal(a.solution_u, b.solution_u));
  EXPECT_EQ(a.energy_value, b.energy_value);
  EXPECT_EQ(a.iterations, b.iterations);

  const GridFunction neg = -a.solution_u;
  EXPECT_EQ(energy(neg, spec), energy(a.solution_u, spec));
  EXPECT_EQ(residual_dual_norm(gradient(neg, spec)), residual_dual_norm(gradient(a.solution_u, spec)));
}

TEST(MountainPass, CollapsesOrFailsWithoutGeometry) {
  // The coercive case has no negative endpoint, so the minimax methods refuse.
  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 4.0, 0.1, 2.0);
  SolverConfig cfg;
  cfg.method = Method::mountain_pass;
  try {
    run_solver(spec, cfg);
    FAIL() << "expected failure";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverErrorKind::no_negative_endpoint);
  }
}

TEST(Descent, ZeroStartIsCritical) {
  const auto spec = coercive_spec(7);
  const SolveReport r = descent_minimize(GridFunction(spec.grid), spec, coercive_config());
  EXPECT_EQ(r.residual, 0.0);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.solution_u.is_zero());
}

TEST(Descent, CoerciveLargeQGivesNegativeMinimizerWithStrictDecrease) {
  const auto spec = coercive_spec(9);
  const SolverConfig cfg = coercive_config();
  const SolveReport r = run_solver(spec, cfg);
  expect_coupled_system(r, spec, cfg.residual_tol);
  EXPECT_LT(r.energy_value, 0.0);
  EXPECT_TRUE(is_nontrivial(r, cfg));
  // Every accepted step decreases the energy. Where the decrease is well above
  // the energy's resolution the computed values show it and must agree with the
  // recorded change, which validates the slope-integrated estimate used below it.
  int resolved = 0;
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    const double change = r.trace[i].energy_change;
    EXPECT_LT(change, 0.0) << i;
    const double observed = r.trace[i].energy - r.trace[i - 1].energy;
    const double resolution = 1e-12 * std::abs(r.trace[i - 1].energy);
    if (-observed > 1e3 * resolution) {
      ++resolved;
      EXPECT_LE(std::abs(observed - change), 1e-3 * std::abs(observed)) << i;
    } else {
      EXPECT_LE(observed, resolution) << i;
    }
  }
  EXPECT_GT(resolved, 10);
  std::printf("  minimum %.10g after %d steps\n", r.energy_value, r.iterations);
}

TEST(Descent, CriticalExponentStartsAllReachZero) {
  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 3.0, 1.0, 5.0);
  SolverConfig cfg;
  cfg.method = Method::descent;
  for (int k = 0; k < 20; ++k) {
    const SolveReport r = solve_from(spec, cfg, random_smooth_direction(spec.grid, 7, static_cast<std::uint64_t>(k)));
    EXPECT_LE(max_abs(r.solution_u), 1e-6) << k;
  }
}

TEST(Newton, QuadraticConvergenceFromDescentOutput) {
  const auto spec = coercive_spec(9);
  const SolveReport d = run_solver(spec, coercive_config());
  SolverConfig cfg;
  cfg.residual_tol = 1e-10;
  const SolveReport r = newton_refine(d.solution_u, spec, cfg);
  EXPECT_LE(r.residual, 1e-10);
  EXPECT_LE(r.iterations, 10);
  ASSERT_GE(r.trace.size(), 2u);
  // Each step with a residual well above the floor at least squares it up to a constant.
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    const double prev = r.trace[i - 1].residual, cur = r.trace[i].residual;
    std::printf("  newton step %zu: %.3e -> %.3e\n", i, prev, cur);
    if (prev < 1e-2 && cur > 1e-13) {
      EXPECT_GT(std::log(cur) / std::log(prev), 1.5) << i;
    }
  }
}

TEST(Newton, ConvergedStartReturnsImmediately) {
  const auto spec = coercive_spec(7);
  SolverConfig cfg;
  cfg.residual_tol = 1e-9;
  const SolveReport first = newton_refine(run_solver(spec, coercive_config()).solution_u, spec, cfg);
  const SolveReport again = newton_refine(first.solution_u, spec, cfg);
  EXPECT_EQ(again.iterations, 0);
  EXPECT_TRUE(bitwise_equal(again.solution_u, first.solution_u));
}

TEST(Newton, CgInnerSolverReportsIndefiniteHessian) {
  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 3.0, 1.0, 3.0);
  const SolveReport mp = run_solver(spec, SolverConfig{});
  SolverConfig cfg;
  cfg.inner = InnerSolver::cg;
  // Beyond the peak the gradient points along the ray, a negative-curvature direction.
  try {
    newton_refine(2.0 * mp.solution_u, spec, cfg);
    FAIL() << "expected indefinite Hessian";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverErrorKind::indefinite_hessian);
  }
  cfg.inner = InnerSolver::minres;
  cfg.residual_tol = 1e-9;
  EXPECT_LE(newton_refine(mp.solution_u, spec, cfg).residual, 1e-9);
}

TEST(MultiStart, ClusteringIsIdempotentAndSignBlind) {
  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 3.0, 1.0, 3.0);
  SolverConfig cfg;
  const SolveReport r = run_solver(spec, cfg);
  std::vector<StartOutcome> outs(3);
  for (auto& o : outs) {
    o.report = r;
    o.converged = true;
    o.nontrivial = true;
  }
  outs[2].report->solution_u *= -1.0;
  const auto reps = cluster_solutions(outs, cfg);
  EXPECT_EQ(reps.size(), 1u);
  for (const auto& o : outs) EXPECT_EQ(o.cluster, 0);
  EXPECT_EQ(couple_distance(r.solution_u, -r.solution_u), 0.0);
}

TEST(MultiStart, SuperlinearRegimeFindsSeveralCouplesDeterministically) {
  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 3.0, 1.0, 3.0);
  SolverConfig cfg;
  const MultiStartResult a = multi_start_detailed(spec, cfg, 3);
  ASSERT_EQ(a.outcomes.size(), 8u);
  EXPECT_GE(a.clusters.size(), 2u);
  for (const auto& c : a.clusters) {
    expect_coupled_system(c, spec, cfg.residual_tol);
    std::printf("  couple energy %.10g\n", c.energy_value);
  }
  cfg.threads = 3;
  const MultiStartResult b = multi_start_detailed(spec, cfg, 3);
  ASSERT_EQ(a.clusters.size(), b.clusters.size());
  for (std::size_t i = 0; i < a.clusters.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(a.clusters[i].solution_u, b.clusters[i].solution_u)) << i;
  }
  for (std::size_t i = 0; i < a.outcomes.size(); ++i) {
    EXPECT_EQ(a.outcomes[i].label, b.outcomes[i].label);
    EXPECT_EQ(a.outcomes[i].cluster, b.outcomes[i].cluster);
  }
  EXPECT_THROW(multi_start(spec, cfg, 0), std::invalid_argument);
}

TEST(MultiStart, CriticalExponentReturnsEmptyList) {
  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 3.0, 1.0, 5.0);
  SolverConfig cfg;
  cfg.method = Method::descent;
  const MultiStartResult res = multi_start_detailed(spec, cfg, 20);
  EXPECT_TRUE(res.clusters.empty());
  for (const auto& o : res.outcomes) {
    ASSERT_TRUE(o.report.has_value()) << o.label << ": " << o.message;
    EXPECT_LE(max_abs(o.report->solution_u), 1e-6) << o.label;
  }
}
