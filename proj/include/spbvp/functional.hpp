#pragma once

// Reduced energies I_q, I_{q,r}, the two-variable J_q, the truncated I_q^T and
// their exact discrete gradients (discretize first, then differentiate).

#include <spbvp/grid.hpp>
#include <spbvp/poisson.hpp>
#include <spbvp/problem.hpp>

#include <cmath>
#include <stdexcept>

namespace spbvp {

/// Cutoff chi: 1 on [0,1], 0 on [2,inf), descending smoothstep 2t^3 - 3t^2 + 1
/// (t = s - 1) in between. C^1 with sup |chi'| = 1.5.
struct CutoffChi {
  static double value(double s) {
    if (s <= 1.0) return 1.0;
    if (s >= 2.0) return 0.0;
    const double t = s - 1.0;
    return (2.0 * t - 3.0) * t * t + 1.0;
  }
  static double derivative(double s) {
    if (s <= 1.0 || s >= 2.0) return 0.0;
    const double t = s - 1.0;
    return 6.0 * t * (t - 1.0);
  }
};

/// |s|^(p-1) s, continuous extension 0 at s = 0.
inline double signed_power(double s, double p) {
  if (s == 0.0) return 0.0;
  return std::pow(std::abs(s), p - 1.0) * s;
}

/// Everything one Poisson solve buys at a point u.
struct Evaluation {
  GridFunction phi;          // Phi_u
  GridFunction lap_u;        // A u
  double gradient_sq = 0.0;  // h^3 u^T A u
  double coupling = 0.0;     // int F(u) Phi_u
  double power_int = 0.0;    // int |u|^(p+1)
};

/// int F(u) Phi evaluated as 2 int F(u) Phi - (1/2q) h^3 Phi^T A Phi, which
/// equals int F(u) Phi_u exactly at Phi = Phi_u and is stationary there, so
/// Poisson solver error enters only quadratically.
inline double coupling_integral(const GridFunction& u, const GridFunction& phi, const ProblemSpec& spec) {
  if (spec.q == 0.0) return 0.0;
  const GridFunction f_of_u = map(u, [&](double s) { return spec.nonlinearity.F(s); });
  const double linear = inner(f_of_u, phi);
  const double quad = inner(phi, apply_laplacian(phi));
  return 2.0 * linear - quad / (2.0 * spec.q);
}

inline double power_integral(const GridFunction& u, double p) {
  double s = 0.0;
  for (double v : u.values()) s += std::pow(std::abs(v), p + 1.0);
  return u.grid().cell_volume() * s;
}

inline Evaluation evaluate(const GridFunction& u, const ProblemSpec& spec,
                           double poisson_tol = default_poisson_tol) {
  Evaluation ev{reduction_map(u, spec, poisson_tol), apply_laplacian(u)};
  ev.gradient_sq = inner(u, ev.lap_u);
  ev.coupling = coupling_integral(u, ev.phi, spec);
  ev.power_int = power_integral(u, spec.p);
  return ev;
}

inline double energy_from(const Evaluation& ev, const ProblemSpec& spec) {
  return 0.5 * ev.gradient_sq + spec.epsilon * 0.5 * spec.q * ev.coupling -
         spec.eta * ev.power_int / (spec.p + 1.0);
}

/// I_q(u) = 1/2 |grad u|^2 + eps q/2 int F(u) Phi_u - eta/(p+1) int |u|^(p+1).
/// In P_r mode (eps = eta = -1, F = |u|^r/r) this is I_{q,r}.
inline double energy(const GridFunction& u, const ProblemSpec& spec) {
  return energy_from(evaluate(u, spec), spec);
}

/// J_q(u, phi) = 1/2 |grad u|^2 - eps/4 |grad phi|^2 + eps q int F(u) phi - eta/(p+1) int |u|^(p+1).
inline double energy_joint(const GridFunction& u, const GridFunction& phi, const ProblemSpec& spec) {
  const GridFunction f_of_u = map(u, [&](double s) { return spec.nonlinearity.F(s); });
  return 0.5 * inner(u, apply_laplacian(u)) - 0.25 * spec.epsilon * inner(phi, apply_laplacian(phi)) +
         spec.epsilon * spec.q * inner(f_of_u, phi) - spec.eta * power_integral(u, spec.p) / (spec.p + 1.0);
}

/// Exact gradient of the discrete energy, with h^3 weights:
/// g = h^3 (A u + eps q f(u) Phi_u - eta |u|^(p-1) u).
inline GridFunction gradient_from(const GridFunction& u, const Evaluation& ev, const ProblemSpec& spec,
                                  double coupling_factor = 1.0, double stiffness_factor = 1.0) {
  const double h3 = u.grid().cell_volume();
  const double eq = spec.epsilon * spec.q * coupling_factor;
  GridFunction g(u.grid());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double s = u[i];
    g[i] = h3 * (stiffness_factor * ev.lap_u[i] + eq * spec.nonlinearity.f(s) * ev.phi[i] -
                 spec.eta * signed_power(s, spec.p));
  }
  return g;
}

inline GridFunction gradient(const GridFunction& u, const ProblemSpec& spec) {
  return gradient_from(u, evaluate(u, spec), spec);
}

inline double truncation_radius(const ProblemSpec& spec) {
  if (!spec.truncation_T) throw std::invalid_argument("truncated functional needs truncation_T");
  return *spec.truncation_T;
}

/// I_q^T: the coupling term multiplied by chi(||u||_{H^1_0} / T).
inline double energy_truncated_from(const Evaluation& ev, const ProblemSpec& spec) {
  const double T = truncation_radius(spec);
  const double norm = std::sqrt(std::max(ev.gradient_sq, 0.0));
  if (norm <= T) return energy_from(ev, spec);
  const double chi = CutoffChi::value(norm / T);
  return 0.5 * ev.gradient_sq + spec.epsilon * 0.5 * spec.q * chi * ev.coupling -
         spec.eta * ev.power_int / (spec.p + 1.0);
}

inline double energy_truncated(const GridFunction& u, const ProblemSpec& spec) {
  return energy_truncated_from(evaluate(u, spec), spec);
}

/// Gradient of I_q^T. The chi' term contributes along h^3 A u (the derivative of
/// the H^1_0 norm); the coupling derivative collapses to chi eps q h^3 f(u) Phi_u
/// because int F(u) Phi'_u[v] = int f(u) v Phi_u.
inline GridFunction gradient_truncated_from(const GridFunction& u, const Evaluation& ev,
                                            const ProblemSpec& spec) {
  const double T = truncation_radius(spec);
  const double norm = std::sqrt(std::max(ev.gradient_sq, 0.0));
  if (norm <= T) return gradient_from(u, ev, spec);
  const double chi = CutoffChi::value(norm / T);
  const double dchi = CutoffChi::derivative(norm / T);
  const double stiffness = 1.0 + spec.epsilon * 0.5 * spec.q * dchi * ev.coupling / (T * norm);
  return gradient_from(u, ev, spec, chi, stiffness);
}

inline GridFunction gradient_truncated(const GridFunction& u, const ProblemSpec& spec) {
  return gradient_truncated_from(u, evaluate(u, spec), spec);
}

/// The functional the critical-point search works on: I_q^T when a truncation
/// radius is configured, I_q otherwise.
inline double objective_energy(const Evaluation& ev, const ProblemSpec& spec) {
  return spec.truncation_T ? energy_truncated_from(ev, spec) : energy_from(ev, spec);
}

inline GridFunction objective_gradient(const GridFunction& u, const Evaluation& ev, const ProblemSpec& spec) {
  return spec.truncation_T ? gradient_truncated_from(u, ev, spec) : gradient_from(u, ev, spec);
}

/// H^1_0 Riesz representative A^-1 g / h^3 of a gradient g (the Sobolev
/// gradient) together with the discrete H^-1 norm sqrt(g^T A^-1 g / h^3).
struct DualPair {
  GridFunction riesz;
  double norm = 0.0;
};

inline DualPair dual_pair(const GridFunction& g) {
  GridFunction w = solve_poisson(g);
  w *= 1.0 / g.grid().cell_volume();
  const double n2 = dot(g, w);
  return {std::move(w), std::sqrt(std::max(n2, 0.0))};
}

inline double residual_dual_norm(const GridFunction& g) {
  if (g.is_zero()) return 0.0;
  return dual_pair(g).norm;
}

/// Hessian-vector product of the untruncated discrete energy at u (with
/// phi = Phi_u): h^3 (A v + eps q (f'(u) v Phi + f(u) Phi'_u[v]) - eta p |u|^(p-1) v).
inline GridFunction hessian_apply(const GridFunction& u, const GridFunction& phi, const GridFunction& v,
                                  const ProblemSpec& spec) {
  const double h3 = u.grid().cell_volume();
  GridFunction out = apply_laplacian(v);
  const Nonlinearity& nl = spec.nonlinearity;
  const double eq = spec.epsilon * spec.q;
  if (spec.q != 0.0) {
    const GridFunction dphi = reduction_derivative_apply(u, v, spec);
    for (std::size_t i = 0; i < u.size(); ++i) {
      out[i] += eq * (nl.f_prime(u[i]) * v[i] * phi[i] + nl.f(u[i]) * dphi[i]);
    }
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::abs(u[i]);
    const double dpow = a == 0.0 ? (spec.p == 1.0 ? 1.0 : 0.0) : spec.p * std::pow(a, spec.p - 1.0);
    out[i] -= spec.eta * dpow * v[i];
  }
  out *= h3;
  return out;
}

}  // namespace spbvp
