#pragma once

// Critical-point search: mountain-pass path deformation, Sobolev gradient
// descent, Newton refinement and multi-start multiplicity search.

#include <spbvp/errors.hpp>
#include <spbvp/functional.hpp>
#include <spbvp/krylov.hpp>

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace spbvp {

enum class Method { mountain_pass, descent, newton, mp_then_newton };
enum class InnerSolver { minres, cg };
enum class StartShape { eigenfunction, bump };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::mountain_pass: return "mountain_pass";
    case Method::descent: return "descent";
    case Method::newton: return "newton";
    case Method::mp_then_newton: return "mp_then_newton";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (Method m : {Method::mountain_pass, Method::descent, Method::newton, Method::mp_then_newton}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown method '" + s + "'");
}

struct SolverConfig {
  Method method = Method::mp_then_newton;
  int path_points = 33;            // N: the path has N + 1 nodes including both ends
  int max_outer_iters = 20000;
  double descent_step = 1.0;       // initial and maximal Sobolev step
  double residual_tol = 1e-6;      // on the H^-1 norm of the gradient
  std::uint64_t seed = 1;
  double endpoint_scale_start = 1.0;
  double cluster_tol = 1e-3;       // L2 distance; also the nontriviality threshold
  double warm_tol = 1e-2;          // hand-over residual from mountain pass to Newton
  double init_amplitude = 1.0;     // H^1_0 norm of descent and Newton starts
  StartShape start = StartShape::eigenfunction;
  InnerSolver inner = InnerSolver::minres;
  double inner_tol = 1e-6;
  int newton_max_iters = 50;
  double poisson_tol = 1e-12;      // reduction-map solves inside the search
  int threads = 1;

  void validate() const {
    if (path_points < 8) throw std::invalid_argument("path_points must be >= 8");
    if (max_outer_iters < 1) throw std::invalid_argument("max_outer_iters must be >= 1");
    if (!(descent_step > 0.0)) throw std::invalid_argument("descent_step must be positive");
    if (!(residual_tol > 0.0)) throw std::invalid_argument("residual_tol must be positive");
    if (!(endpoint_scale_start > 0.0)) throw std::invalid_argument("endpoint_scale_start must be positive");
    if (!(cluster_tol > 0.0)) throw std::invalid_argument("cluster_tol must be positive");
    if (!(warm_tol > 0.0)) throw std::invalid_argument("warm_tol must be positive");
    if (!(init_amplitude > 0.0)) throw std::invalid_argument("init_amplitude must be positive");
    if (!(inner_tol > 0.0 && inner_tol < 1.0)) throw std::invalid_argument("inner_tol must lie in (0, 1)");
    if (newton_max_iters < 1) throw std::invalid_argument("newton_max_iters must be >= 1");
    if (!(poisson_tol > 0.0)) throw std::invalid_argument("poisson_tol must be positive");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  }
};

struct TracePoint {
  double energy = 0.0;
  double residual = 0.0;
  double energy_change = 0.0;  // descent: change over the step that produced this point
};

struct SolveReport {
  GridFunction solution_u;
  GridFunction solution_phi;
  double energy_value = 0.0;  // objective energy (truncated when T is set)
  double residual = 0.0;      // H^-1 norm of the objective gradient at solution_u
  std::optional<double> mp_level_estimate;
  int iterations = 0;
  bool truncation_active = false;
  std::vector<TracePoint> trace;
};

inline bool is_nontrivial(const SolveReport& r, const SolverConfig& cfg) {
  return lp_norm(r.solution_u, 2.0) > cfg.cluster_tol;
}

/// Parity of a field under the three coordinate reflections x_a -> -x_a:
/// +1 even, -1 odd, 0 neither. The discrete energy is invariant under these
/// reflections, so its gradient maps each parity class into itself and a
/// critical point found inside a class is a critical point on the full grid.
/// Searching inside the class keeps higher-index saddles (nodal solutions)
/// from drifting off through rounding toward the ground state.
struct Parity {
  std::array<int, 3> axis{0, 0, 0};

  bool trivial() const { return axis[0] == 0 && axis[1] == 0 && axis[2] == 0; }

  /// Classifies u per axis with a relative tolerance on max |u|.
  static Parity detect(const GridFunction& u, double rel_tol = 1e-10) {
    Parity out;
    const double scale = max_abs(u);
    if (scale == 0.0) return out;
    const int n = u.grid().n_per_axis();
    for (int a = 0; a < 3; ++a) {
      double even_dev = 0.0, odd_dev = 0.0;
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i) {
            int m[3] = {i, j, k};
            m[a] = n - 1 - m[a];
            const double v = u.at(i, j, k), w = u.at(m[0], m[1], m[2]);
            even_dev = std::max(even_dev, std::abs(v - w));
            odd_dev = std::max(odd_dev, std::abs(v + w));
          }
      if (even_dev <= rel_tol * scale) out.axis[a] = 1;
      else if (odd_dev <= rel_tol * scale) out.axis[a] = -1;
    }
    return out;
  }

  /// Orthogonal projection onto the class; exact in floating point.
  GridFunction project(GridFunction u) const {
    const int n = u.grid().n_per_axis();
    for (int a = 0; a < 3; ++a) {
      if (axis[a] == 0) continue;
      const double sgn = axis[a];
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i) {
            int m[3] = {i, j, k};
            if (m[a] > n - 1 - m[a]) continue;
            m[a] = n - 1 - m[a];
            double& v = u.at(i, j, k);
            double& w = u.at(m[0], m[1], m[2]);
            if (&v == &w) {
              if (sgn < 0.0) v = 0.0;
              continue;
            }
            const double mean = 0.5 * (v + sgn * w);
            v = mean;
            w = sgn * mean;
          }
    }
    return u;
  }
};

namespace detail {

struct Point {
  GridFunction u;
  Evaluation ev;
  double energy;
};

inline Point make_point(GridFunction u, const ProblemSpec& spec, const SolverConfig& cfg) {
  Evaluation ev = evaluate(u, spec, cfg.poisson_tol);
  const double e = objective_energy(ev, spec);
  return {std::move(u), std::move(ev), e};
}

inline bool truncation_active(const Evaluation& ev, const ProblemSpec& spec) {
  return spec.truncation_T && std::sqrt(std::max(ev.gradient_sq, 0.0)) > *spec.truncation_T;
}

inline SolveReport make_report(const Point& x, const ProblemSpec& spec, int iterations,
                               std::vector<TracePoint> trace) {
  SolveReport r{x.u, x.ev.phi, 0.0, 0.0, std::nullopt, 0, false, {}};
  r.energy_value = x.energy;
  r.residual = residual_dual_norm(objective_gradient(x.u, x.ev, spec));
  r.iterations = iterations;
  r.truncation_active = truncation_active(x.ev, spec);
  r.trace = std::move(trace);
  return r;
}

/// Armijo test with sufficient decrease `margin`. Once the margin drops below
/// the energy's floating-point resolution (relative 1e-12) a step within that
/// resolution is accepted, so energies are monotone up to a relative 1e-12.
inline bool armijo_accept(double trial, double current, double margin) {
  const double resolution = 1e-12 * std::abs(current);
  if (margin >= resolution) return trial < current && trial <= current - margin;
  return trial <= current + resolution;
}

/// One Armijo-damped descent step from x along -dp.riesz. `step` is the first
/// trial length and is updated for the next call. Returns the energy change of
/// the accepted step, or nothing if no step passed.
///
/// Near a minimum the decrease falls below one ulp of the energy, so computed
/// energies cannot certify it. Below the resolution the change is instead the
/// trapezoid integral of the directional slope, (s/2)(<g(x), d> + <g(x + s d), d>),
/// which is accurate relative to the change itself, and the Armijo test is
/// applied to that estimate.
inline std::optional<double> sobolev_step(Point& x, const DualPair& dp, double& step, const ProblemSpec& spec,
                                          const SolverConfig& cfg, const Parity& parity = {}) {
  constexpr double armijo = 1e-4;
  const double slope = dp.norm * dp.norm;
  const double resolution = 1e-12 * std::abs(x.energy);
  double s = step;
  for (int k = 0; k < 60; ++k, s *= 0.5) {
    GridFunction trial = x.u;
    trial.axpy(-s, dp.riesz);
    Point t = make_point(parity.project(std::move(trial)), spec, cfg);
    const double margin = armijo * s * slope;
    double change = t.energy - x.energy;
    bool ok = change < 0.0 && change <= -margin;
    if (margin < resolution) {
      const double end_slope = -dot(objective_gradient(t.u, t.ev, spec), dp.riesz);
      change = 0.5 * s * (-slope + end_slope);
      ok = change <= -margin && t.energy <= x.energy + resolution;
    }
    if (ok) {
      x = std::move(t);
      step = std::min(2.0 * s, cfg.descent_step);
      return change;
    }
  }
  return std::nullopt;
}

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Centered Gaussian bump exp(-|x|^2 / (2 sigma^2)), sigma = L / 6.
inline GridFunction gaussian_bump(const Grid& g) {
  const double sigma = g.edge_length() / 6.0;
  const int n = g.n_per_axis();
  GridFunction u(g);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double x = g.coordinate(i), y = g.coordinate(j), z = g.coordinate(k);
        u.at(i, j, k) = std::exp(-(x * x + y * y + z * z) / (2.0 * sigma * sigma));
      }
  return u;
}

/// Random combination of the modes with k <= 3 per axis, coefficient
/// uniform(-1, 1) / |k|^2, drawn from a splitmix stream keyed by (seed, stream).
inline GridFunction random_smooth_direction(const Grid& g, std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = detail::splitmix(seed ^ detail::splitmix(stream + 1));
  GridFunction u(g);
  for (int kx = 1; kx <= 3; ++kx)
    for (int ky = 1; ky <= 3; ++ky)
      for (int kz = 1; kz <= 3; ++kz) {
        state = detail::splitmix(state);
        const double unit = static_cast<double>(state >> 11) * 0x1.0p-53;
        u.axpy((2.0 * unit - 1.0) / (kx * kx + ky * ky + kz * kz), eigenfunction(g, kx, ky, kz));
      }
  return u;
}

inline GridFunction start_direction(const Grid& g, StartShape shape) {
  return shape == StartShape::bump ? gaussian_bump(g) : eigenfunction(g, 1, 1, 1);
}

/// Smallest t = scale_start 2^k (k < 60) with objective energy of
/// t direction / ||direction||_{H^1_0} below zero.
inline GridFunction find_endpoint(const ProblemSpec& spec, const GridFunction& direction,
                                  double scale_start = 1.0) {
  const double norm = h10_norm(direction);
  if (norm == 0.0) throw std::invalid_argument("endpoint direction must be nonzero");
  if (!(scale_start > 0.0)) throw std::invalid_argument("endpoint scale must be positive");
  double t = scale_start;
  for (int k = 0; k <= 60; ++k, t *= 2.0) {
    GridFunction u = (t / norm) * direction;
    if (objective_energy(evaluate(u, spec), spec) < 0.0) return u;
  }
  throw SolverError(SolverErrorKind::no_negative_endpoint,
                    "energy stayed nonnegative up to t = " + std::to_string(t / 2.0));
}

/// Mountain pass by peak selection. The current path runs from 0 along the
/// ray through the direction v to a negative-energy point and on to the fixed
/// endpoint inside the negative sublevel set; its maximum is the peak t(v) v,
/// located exactly as a root of t -> <g(t v), v>. Each iteration moves the peak
/// one Armijo steepest-descent step (Sobolev gradient) and re-selects the peak
/// on the new ray; a step is accepted only if the new peak lies below the old
/// level by the Armijo margin, so the level is nonincreasing.
/// Resumable: run() may be called again with a tighter tolerance.
class MountainPass {
 public:
  MountainPass(const ProblemSpec& spec, const SolverConfig& cfg, const GridFunction& endpoint, Parity parity = {})
      : spec_(spec), cfg_(cfg), endpoint_(parity.project(endpoint)), parity_(parity) {
    const double t_end = h10_norm(endpoint_);
    if (t_end == 0.0) throw std::invalid_argument("mountain pass endpoint must be nonzero");
    const GridFunction v = (1.0 / t_end) * endpoint_;
    auto peak = select_peak(v, 0.5 * t_end);
    if (!peak) throw SolverError(SolverErrorKind::collapsed_to_zero, "no peak on the initial ray");
    top_ = std::move(*peak);
    step_ = cfg.descent_step;
  }

  void run(double tol) {
    for (;;) {
      if (!(top_.energy > 0.0)) {
        throw SolverError(SolverErrorKind::non_positive_level, "path maximum " + std::to_string(top_.energy));
      }
      if (lp_norm(top_.u, 2.0) < cfg_.cluster_tol) {
        throw SolverError(SolverErrorKind::collapsed_to_zero, "path maximum reached the origin");
      }
      const DualPair dp = dual_pair(objective_gradient(top_.u, top_.ev, spec_));
      trace_.push_back({top_.energy, dp.norm});
      residual_ = dp.norm;
      if (dp.norm <= tol) return;
      if (iterations_ >= cfg_.max_outer_iters) {
        throw SolverError(SolverErrorKind::iteration_cap,
                          "mountain pass residual " + std::to_string(dp.norm) + " after " +
                              std::to_string(iterations_) + " iterations");
      }
      if (!deform(dp)) {
        throw SolverError(SolverErrorKind::iteration_cap,
                          "mountain pass line search stalled at residual " + std::to_string(dp.norm));
      }
      ++iterations_;
    }
  }

  const GridFunction& top() const { return top_.u; }
  const GridFunction& endpoint() const { return endpoint_; }
  double level() const { return top_.energy; }
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }
  const std::vector<TracePoint>& trace() const { return trace_; }

  /// Objective energy at the N + 1 equally spaced nodes t_i v of the current
  /// ray, i = 0..N, with t_N = 2 t(v). Diagnostic only.
  std::vector<double> ray_energies() const {
    const int N = cfg_.path_points;
    std::vector<double> e;
    for (int i = 0; i <= N; ++i) {
      const GridFunction u = (2.0 * i / N) * top_.u;
      e.push_back(objective_energy(evaluate(u, spec_, cfg_.poisson_tol), spec_));
    }
    return e;
  }

  SolveReport report() const {
    SolveReport r = detail::make_report(top_, spec_, iterations_, trace_);
    r.mp_level_estimate = level();
    return r;
  }

 private:
  // d/dt E(t v) at t, together with the point itself.
  std::pair<double, detail::Point> ray_slope(const GridFunction& v, double t) const {
    detail::Point x = detail::make_point(t * v, spec_, cfg_);
    const double slope = dot(objective_gradient(x.u, x.ev, spec_), v);
    return {slope, std::move(x)};
  }

  // Peak of t -> E(t v) near t0 for a unit direction v: bracket a sign change
  // of the ray slope from + to -, then TOMS 748. Empty if the slope stays
  // nonpositive down to the origin or positive out to 2^60 t0.
  std::optional<detail::Point> select_peak(const GridFunction& v, double t0) const {
    double lo = t0, hi = t0;
    auto [s_lo, x_lo] = ray_slope(v, lo);
    if (s_lo == 0.0) return std::move(x_lo);
    if (s_lo > 0.0) {
      double s_hi = s_lo;
      for (int k = 0; k < 60 && s_hi > 0.0; ++k) {
        lo = hi;
        hi *= 1.5;
        s_hi = ray_slope(v, hi).first;
      }
      if (s_hi > 0.0) return std::nullopt;
    } else {
      for (int k = 0; k < 200 && s_lo <= 0.0; ++k) {
        hi = lo;
        lo /= 1.5;
        s_lo = ray_slope(v, lo).first;
      }
      if (s_lo <= 0.0) return std::nullopt;
    }
    auto f = [&](double t) { return ray_slope(v, t).first; };
    auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-13 * std::max(std::abs(a), std::abs(b)); };
    std::uintmax_t max_iter = 100;
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, tol, max_iter);
    auto pa = ray_slope(v, a).second;
    auto pb = ray_slope(v, b).second;
    return pa.energy >= pb.energy ? std::move(pa) : std::move(pb);
  }

  bool deform(const DualPair& dp) {
    constexpr double armijo = 1e-4;
    const double level = top_.energy;
    const double slope = dp.norm * dp.norm;
    const double t = h10_norm(top_.u);
    // At most a half-radius move per step, so the ray turns by less than 30 degrees.
    double s = std::min(step_, 0.5 * t / dp.norm);
    for (int k = 0; k < 60; ++k, s *= 0.5) {
      GridFunction moved = top_.u;
      moved.axpy(-s, dp.riesz);
      moved = parity_.project(std::move(moved));
      const double mn = h10_norm(moved);
      if (mn == 0.0) continue;
      auto peak = select_peak((1.0 / mn) * moved, mn);
      if (!peak) continue;
      if (detail::armijo_accept(peak->energy, level, armijo * s * slope)) {
        top_ = std::move(*peak);
        step_ = std::min(2.0 * s, cfg_.descent_step);
        return true;
      }
    }
    return false;
  }

  ProblemSpec spec_;
  SolverConfig cfg_;
  GridFunction endpoint_;
  Parity parity_;
  detail::Point top_{GridFunction(endpoint_.grid()), Evaluation{GridFunction(endpoint_.grid()),
                                                                GridFunction(endpoint_.grid())},
                     0.0};
  std::vector<TracePoint> trace_;
  double step_ = 1.0;
  double residual_ = 0.0;
  int iterations_ = 0;
};

inline SolveReport mountain_pass(const ProblemSpec& spec, const SolverConfig& cfg, const GridFunction& direction,
                                 const Parity& parity = {}) {
  cfg.validate();
  MountainPass mp(spec, cfg, find_endpoint(spec, direction, cfg.endpoint_scale_start), parity);
  mp.run(cfg.residual_tol);
  return mp.report();
}

inline SolveReport mountain_pass(const ProblemSpec& spec, const SolverConfig& cfg) {
  return mountain_pass(spec, cfg, start_direction(spec.grid, cfg.start));
}

/// Descent direction for the gradient g at u in the weighted Sobolev metric
/// h^3 (A + p |u|^(p-1)) when the power term is convex (eta = -1), plain
/// h^3 A otherwise. The weight absorbs the stiff convex part of the Hessian,
/// which otherwise makes the plain Sobolev descent crawl once max |u|^(p-1)
/// dwarfs the first eigenvalue. Returned with sqrt(<g, w>) as `norm`.
inline DualPair descent_direction(const GridFunction& u, const GridFunction& g, const ProblemSpec& spec) {
  if (spec.eta > 0) return dual_pair(g);
  const Grid& grid = u.grid();
  const double h = grid.spacing();
  GridFunction weight = map(u, [&](double s) { return spec.p * std::pow(std::abs(s), spec.p - 1.0); });
  auto op = [&](const GridFunction& v) {
    GridFunction out = apply_laplacian(v);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += weight[i] * v[i];
    return out;
  };
  auto jacobi = [&](const GridFunction& r) {
    GridFunction z(grid);
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] / (6.0 / (h * h) + weight[i]);
    return z;
  };
  const GridFunction rhs = (1.0 / grid.cell_volume()) * g;
  bool negative = false;
  GridFunction w = krylov::pcg(op, jacobi, rhs, 1e-10, static_cast<int>(10 * grid.node_count()), nullptr, &negative);
  const double n2 = dot(g, w);
  return {std::move(w), std::sqrt(std::max(n2, 0.0))};
}

/// Gradient descent in the metric of descent_direction with Armijo
/// backtracking (factor 1/2, constant 1e-4). Stops on the H^-1 residual.
inline SolveReport descent_minimize(const GridFunction& u0, const ProblemSpec& spec, const SolverConfig& cfg,
                                    const Parity& parity = {}) {
  cfg.validate();
  detail::Point x = detail::make_point(parity.project(u0), spec, cfg);
  double step = cfg.descent_step;
  std::vector<TracePoint> trace;
  double change = 0.0;
  for (int it = 0;; ++it) {
    const GridFunction g = objective_gradient(x.u, x.ev, spec);
    const double res = residual_dual_norm(g);
    trace.push_back({x.energy, res, change});
    if (res <= cfg.residual_tol) return detail::make_report(x, spec, it, std::move(trace));
    if (it >= cfg.max_outer_iters) {
      throw SolverError(SolverErrorKind::iteration_cap, "descent residual " + std::to_string(res));
    }
    const auto accepted = detail::sobolev_step(x, descent_direction(x.u, g, spec), step, spec, cfg, parity);
    if (!accepted) {
      throw SolverError(SolverErrorKind::iteration_cap,
                        "descent line search stalled at residual " + std::to_string(res));
    }
    change = *accepted;
  }
}

/// Inexact Newton on the objective gradient. The Hessian is indefinite at
/// mountain-pass points, so MINRES is the default inner solver; the CG option
/// reports negative curvature as indefinite_hessian. Where the cutoff is
/// active the Hessian product is a central difference of the gradient.
/// Globalized by backtracking on the H^-1 residual.
inline SolveReport newton_refine(const GridFunction& u0, const ProblemSpec& spec, const SolverConfig& cfg,
                                 const Parity& parity = {}) {
  cfg.validate();
  const double h3 = u0.grid().cell_volume();
  detail::Point x = detail::make_point(parity.project(u0), spec, cfg);
  double res = residual_dual_norm(objective_gradient(x.u, x.ev, spec));
  std::vector<TracePoint> trace{{x.energy, res}};
  std::vector<double> history{res};

  for (int it = 0;; ++it) {
    if (res <= cfg.residual_tol) return detail::make_report(x, spec, it, std::move(trace));
    if (it >= cfg.newton_max_iters) {
      throw SolverError(SolverErrorKind::iteration_cap, "Newton residual " + std::to_string(res));
    }
    const GridFunction g = objective_gradient(x.u, x.ev, spec);
    const bool fd = detail::truncation_active(x.ev, spec);
    auto hess = [&](const GridFunction& v) {
      if (!fd) return hessian_apply(x.u, x.ev.phi, v, spec);
      const double vn = h10_norm(v);
      if (vn == 0.0) return GridFunction(v.grid());
      const double d = 1e-6 * std::max(1.0, h10_norm(x.u)) / vn;
      GridFunction plus = x.u, minus = x.u;
      plus.axpy(d, v);
      minus.axpy(-d, v);
      GridFunction out = objective_gradient(plus, evaluate(plus, spec, cfg.poisson_tol), spec);
      out -= objective_gradient(minus, evaluate(minus, spec, cfg.poisson_tol), spec);
      out *= 1.0 / (2.0 * d);
      return out;
    };
    auto prec = [&](const GridFunction& r) {
      GridFunction z = solve_poisson(r);
      z *= 1.0 / h3;
      return z;
    };
    const GridFunction rhs = -g;
    const int inner_cap = 500;
    GridFunction dir(u0.grid());
    if (cfg.inner == InnerSolver::minres) {
      dir = krylov::minres(hess, prec, rhs, cfg.inner_tol, inner_cap);
    } else {
      bool negative = false;
      dir = krylov::pcg(hess, prec, rhs, cfg.inner_tol, inner_cap, nullptr, &negative);
      if (negative) throw SolverError(SolverErrorKind::indefinite_hessian, "negative curvature in Newton CG");
    }
    dir = parity.project(std::move(dir));

    // Backtracking on the residual; if nothing decreases it, the best trial is
    // taken and the divergence monitor decides.
    std::optional<detail::Point> best;
    double best_res = 0.0;
    double alpha = 1.0;
    for (int k = 0; k < 30; ++k, alpha *= 0.5) {
      GridFunction trial = x.u;
      trial.axpy(alpha, dir);
      detail::Point t = detail::make_point(std::move(trial), spec, cfg);
      const double tr = residual_dual_norm(objective_gradient(t.u, t.ev, spec));
      if (!best || tr < best_res) {
        best_res = tr;
        best = std::move(t);
      }
      if (best_res <= (1.0 - 1e-4 * alpha) * res) break;
    }
    x = std::move(*best);
    res = best_res;
    trace.push_back({x.energy, res});
    history.push_back(res);
    const std::size_t m = history.size();
    if (m >= 6) {
      bool growing = true;
      for (std::size_t j = m - 5; j < m; ++j) growing = growing && history[j] > history[j - 1];
      if (growing && history[m - 1] > 10.0 * history[m - 6]) {
        throw SolverError(SolverErrorKind::diverged, "Newton residual grew to " + std::to_string(res));
      }
    }
  }
}

/// Mountain pass to cfg.warm_tol, then Newton. A failed or degenerate Newton
/// run resumes the path deformation with a tolerance ten times tighter.
inline SolveReport mp_then_newton(const ProblemSpec& spec, const SolverConfig& cfg, const GridFunction& direction,
                                  const Parity& parity = {}) {
  cfg.validate();
  MountainPass mp(spec, cfg, find_endpoint(spec, direction, cfg.endpoint_scale_start), parity);
  double warm = std::max(cfg.warm_tol, cfg.residual_tol);
  for (;;) {
    mp.run(warm);
    if (mp.residual() <= cfg.residual_tol) return mp.report();
    try {
      SolveReport r = newton_refine(mp.top(), spec, cfg, parity);
      if (is_nontrivial(r, cfg) && r.energy_value > 0.0) {
        r.mp_level_estimate = mp.level();
        std::vector<TracePoint> trace = mp.trace();
        trace.insert(trace.end(), r.trace.begin(), r.trace.end());
        r.trace = std::move(trace);
        r.iterations += mp.iterations();
        return r;
      }
    } catch (const SolverError&) {
    }
    warm = std::max(warm / 10.0, cfg.residual_tol);
  }
}

inline SolveReport mp_then_newton(const ProblemSpec& spec, const SolverConfig& cfg) {
  return mp_then_newton(spec, cfg, start_direction(spec.grid, cfg.start));
}

/// Runs the configured method from `direction`: the minimax methods use it as
/// the endpoint direction, descent and Newton start from init_amplitude times
/// its H^1_0 normalization. The search stays in the reflection parity class
/// of `direction`.
inline SolveReport solve_from(const ProblemSpec& spec, const SolverConfig& cfg, const GridFunction& direction) {
  const Parity parity = Parity::detect(direction);
  switch (cfg.method) {
    case Method::mountain_pass: return mountain_pass(spec, cfg, direction, parity);
    case Method::mp_then_newton: return mp_then_newton(spec, cfg, direction, parity);
    case Method::descent:
    case Method::newton: {
      const double n = h10_norm(direction);
      if (n == 0.0) throw std::invalid_argument("start direction must be nonzero");
      const GridFunction u0 = (cfg.init_amplitude / n) * direction;
      return cfg.method == Method::descent ? descent_minimize(u0, spec, cfg, parity)
                                           : newton_refine(u0, spec, cfg, parity);
    }
  }
  throw std::logic_error("unhandled method");
}

inline SolveReport run_solver(const ProblemSpec& spec, const SolverConfig& cfg) {
  return solve_from(spec, cfg, start_direction(spec.grid, cfg.start));
}

/// Flips u (and nothing else: Phi and the energy are even in u) so that its
/// largest-magnitude entry, first in index order, is positive.
inline void normalize_sign(SolveReport& r) {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < r.solution_u.size(); ++i) {
    const double a = std::abs(r.solution_u[i]);
    if (a > best) {
      best = a;
      arg = i;
    }
  }
  if (r.solution_u.size() > 0 && r.solution_u[arg] < 0.0) r.solution_u *= -1.0;
}

/// L2 distance between the couples {u, -u} and {v, -v}.
inline double couple_distance(const GridFunction& u, const GridFunction& v) {
  return std::min(lp_norm(u - v, 2.0), lp_norm(u + v, 2.0));
}

struct StartOutcome {
  std::string label;
  std::optional<SolveReport> report;
  std::optional<SolverErrorKind> error;
  std::string message;
  bool converged = false;   // residual <= residual_tol
  bool nontrivial = false;  // L2 norm > cluster_tol
  int cluster = -1;
};

struct MultiStartResult {
  std::vector<StartOutcome> outcomes;  // by start index
  std::vector<SolveReport> clusters;   // one representative per couple, in order of first appearance
};

/// Deterministic starts e111, e211, e121, e112 and the Gaussian bump, followed
/// by n_starts seeded random low-mode directions.
inline std::vector<std::pair<std::string, GridFunction>> multi_start_directions(const Grid& g, std::uint64_t seed,
                                                                                 int n_starts) {
  std::vector<std::pair<std::string, GridFunction>> dirs;
  dirs.emplace_back("e111", eigenfunction(g, 1, 1, 1));
  dirs.emplace_back("e211", eigenfunction(g, 2, 1, 1));
  dirs.emplace_back("e121", eigenfunction(g, 1, 2, 1));
  dirs.emplace_back("e112", eigenfunction(g, 1, 1, 2));
  dirs.emplace_back("bump", gaussian_bump(g));
  for (int k = 0; k < n_starts; ++k) {
    dirs.emplace_back("random" + std::to_string(k), random_smooth_direction(g, seed, static_cast<std::uint64_t>(k)));
  }
  return dirs;
}

/// Groups converged nontrivial reports into couples; the first report of each
/// couple (sign-normalized) represents it.
inline std::vector<SolveReport> cluster_solutions(std::vector<StartOutcome>& outcomes, const SolverConfig& cfg) {
  std::vector<SolveReport> reps;
  for (auto& o : outcomes) {
    if (!o.report || !o.converged || !o.nontrivial) continue;
    normalize_sign(*o.report);
    for (std::size_t c = 0; c < reps.size() && o.cluster < 0; ++c) {
      if (couple_distance(o.report->solution_u, reps[c].solution_u) <= cfg.cluster_tol) o.cluster = static_cast<int>(c);
    }
    if (o.cluster < 0) {
      o.cluster = static_cast<int>(reps.size());
      reps.push_back(*o.report);
    }
  }
  return reps;
}

inline MultiStartResult multi_start_detailed(const ProblemSpec& spec, const SolverConfig& cfg, int n_starts) {
  if (n_starts < 1) throw std::invalid_argument("multi_start needs n_starts >= 1");
  cfg.validate();
  const auto dirs = multi_start_directions(spec.grid, cfg.seed, n_starts);
  MultiStartResult out;
  out.outcomes.resize(dirs.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < dirs.size(); i = next++) {
      StartOutcome& o = out.outcomes[i];
      o.label = dirs[i].first;
      try {
        o.report = solve_from(spec, cfg, dirs[i].second);
        o.converged = o.report->residual <= cfg.residual_tol;
        o.nontrivial = is_nontrivial(*o.report, cfg);
      } catch (const SolverError& e) {
        o.error = e.kind();
        o.message = e.what();
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int nthreads = std::min<int>(cfg.threads, static_cast<int>(dirs.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  out.clusters = cluster_solutions(out.outcomes, cfg);
  return out;
}

inline std::vector<SolveReport> multi_start(const ProblemSpec& spec, const SolverConfig& cfg, int n_starts) {
  return multi_start_detailed(spec, cfg, n_starts).clusters;
}

}  // namespace spbvp
