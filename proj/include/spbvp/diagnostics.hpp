#pragma once

// Discrete checks of the identities satisfied by solutions of the coupled
// system and of the estimates satisfied by every u.

#include <spbvp/functional.hpp>
#include <spbvp/poisson.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace spbvp {

namespace detail {

inline void require_pr_pair(const GridFunction& u, const GridFunction& phi, const ProblemSpec& spec) {
  if (spec.mode != Mode::p_r) throw std::invalid_argument("identity is stated for the P_r system");
  if (!(u.grid() == spec.grid) || !(phi.grid() == spec.grid)) {
    throw std::invalid_argument("fields and problem use different grids");
  }
}

// Rectangle-rule integral over the six faces of |d w / dn|^2, with the normal
// derivative (4 w_1 - w_2) / (2h) from the two nodes next to each face and the
// boundary value 0.
inline double boundary_flux_sq(const GridFunction& w) {
  const Grid& g = w.grid();
  const int n = g.n_per_axis();
  const double h = g.spacing();
  double sum = 0.0;
  auto face = [&](auto node) {
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) {
        const double d = (4.0 * node(a, b, 0) - node(a, b, 1)) / (2.0 * h);
        sum += d * d;
      }
  };
  face([&](int a, int b, int m) { return w.at(m, a, b); });
  face([&](int a, int b, int m) { return w.at(n - 1 - m, a, b); });
  face([&](int a, int b, int m) { return w.at(a, m, b); });
  face([&](int a, int b, int m) { return w.at(a, n - 1 - m, b); });
  face([&](int a, int b, int m) { return w.at(a, b, m); });
  face([&](int a, int b, int m) { return w.at(a, b, n - 1 - m); });
  return h * h * sum;
}

}  // namespace detail

struct PohozaevTerms {
  double field_energy = 0.0;  // (r - 5)/4 ||grad Phi||^2
  double power = 0.0;         // (5 - p)/(2(p + 1)) ||u||_{p+1}^{p+1}
  double boundary_u = 0.0;    // 1/2 int |du/dn|^2 x.n
  double boundary_phi = 0.0;  // 1/4 int |dPhi/dn|^2 x.n
  double total() const { return field_energy + power + boundary_u + boundary_phi; }
};

/// Terms of the Pohozaev combination for the P_r system on the cube, taken
/// about the star center `center`. The face formula x.n = L/2 holds only for
/// the cube center, so any other center is rejected.
inline PohozaevTerms pohozaev_terms(const GridFunction& u, const GridFunction& phi, const ProblemSpec& spec,
                                    std::array<double, 3> center = {0.0, 0.0, 0.0}) {
  detail::require_pr_pair(u, phi, spec);
  if (center[0] != 0.0 || center[1] != 0.0 || center[2] != 0.0) {
    throw std::invalid_argument("Pohozaev residual needs the star center at the cube center");
  }
  if (spec.grid.n_per_axis() < 2) throw std::invalid_argument("boundary flux needs n >= 2");
  const double xn = 0.5 * spec.grid.edge_length();
  PohozaevTerms t;
  t.field_energy = (spec.r - 5.0) / 4.0 * inner(phi, apply_laplacian(phi));
  t.power = (5.0 - spec.p) / (2.0 * (spec.p + 1.0)) * power_integral(u, spec.p);
  t.boundary_u = 0.5 * xn * detail::boundary_flux_sq(u);
  t.boundary_phi = 0.25 * xn * detail::boundary_flux_sq(phi);
  return t;
}

inline double pohozaev_residual(const GridFunction& u, const GridFunction& phi, const ProblemSpec& spec,
                                std::array<double, 3> center = {0.0, 0.0, 0.0}) {
  return pohozaev_terms(u, phi, spec, center).total();
}

/// Absolute defects of the two testing identities of the P_r system:
/// ||grad u||^2 = q int Phi |u|^r - ||u||_{p+1}^{p+1} and
/// r ||grad Phi||^2 = 2 q int Phi |u|^r.
inline std::pair<double, double> nehari_residuals(const GridFunction& u, const GridFunction& phi,
                                                  const ProblemSpec& spec) {
  detail::require_pr_pair(u, phi, spec);
  const double grad_u = inner(u, apply_laplacian(u));
  const double grad_phi = inner(phi, apply_laplacian(phi));
  const GridFunction ur = map(u, [&](double s) { return std::pow(std::abs(s), spec.r); });
  const double coupling = spec.q * inner(phi, ur);
  const double ne1 = std::abs(grad_u - (coupling - power_integral(u, spec.p)));
  const double ne2 = std::abs(spec.r * grad_phi - 2.0 * coupling);
  return {ne1, ne2};
}

struct UpperEstimate {
  double k = 0.0;
  double lhs = 0.0;  // k q int F(u) Phi_u
  double rhs = 0.0;  // 2 q int F(u) |u| - ||grad u||^2 / (2k)
  bool holds = false;
};

struct IdentityReport {
  double svista_lhs = 0.0;       // ||grad Phi_u||^2
  double svista_rhs = 0.0;       // 2 q int F(u) Phi_u
  double svista_residual = 0.0;  // |lhs - rhs|
  double positivity = 0.0;       // int F(u) Phi_u
  std::optional<double> holder2_ratio;  // ||grad Phi_u|| / (q ||F(u)||_{6/5})
  std::optional<double> control_ratio;  // int F Phi_u / (q (||u||_{6/5}^2 + ||u||_6^10))
  std::vector<UpperEstimate> upper;
  double tol = 0.0;

  bool svista_ok() const { return svista_residual <= tol * std::max(std::abs(svista_rhs), std::abs(svista_lhs)); }
  bool positivity_ok() const { return positivity >= -tol * std::max(std::abs(svista_rhs), 1e-300); }
  bool upper_ok() const {
    for (const auto& e : upper)
      if (!e.holds) return false;
    return true;
  }
  bool passed() const { return svista_ok() && positivity_ok() && upper_ok(); }
};

/// Evaluates the energy identity, the sign of the coupling, the two measured
/// estimate ratios and the Young-type lower bound for k = 1, 2, 5, 10 at the
/// pair (u, phi), where phi should be Phi_u. The lower bound uses F in place
/// of |u|^r / r, which is the same statement in P_r mode. Tolerances are relative.
inline IdentityReport verify_identities(const GridFunction& u, const GridFunction& phi, const ProblemSpec& spec,
                                        double tol = 1e-8) {
  IdentityReport rep;
  rep.tol = tol;
  const GridFunction Fu = map(u, [&](double s) { return spec.nonlinearity.F(s); });
  rep.svista_lhs = inner(phi, apply_laplacian(phi));
  rep.positivity = inner(Fu, phi);
  rep.svista_rhs = 2.0 * spec.q * rep.positivity;
  rep.svista_residual = std::abs(rep.svista_lhs - rep.svista_rhs);

  const double f65 = lp_norm(Fu, 1.2);
  if (spec.q > 0.0 && f65 > 0.0) rep.holder2_ratio = std::sqrt(std::max(rep.svista_lhs, 0.0)) / (spec.q * f65);
  const double u65 = lp_norm(u, 1.2), u6 = lp_norm(u, 6.0);
  const double control = spec.q * (u65 * u65 + std::pow(u6, 10.0));
  if (control > 0.0) rep.control_ratio = rep.positivity / control;

  const double grad_u = inner(u, apply_laplacian(u));
  const double f_abs_u = inner(Fu, map(u, [](double s) { return std::abs(s); }));
  for (double k : {1.0, 2.0, 5.0, 10.0}) {
    UpperEstimate e;
    e.k = k;
    e.lhs = k * spec.q * rep.positivity;
    e.rhs = 2.0 * spec.q * f_abs_u - grad_u / (2.0 * k);
    const double scale = std::max({std::abs(e.lhs), std::abs(2.0 * spec.q * f_abs_u), grad_u / (2.0 * k)});
    e.holds = e.lhs >= e.rhs - tol * scale;
    rep.upper.push_back(e);
  }
  return rep;
}

/// Same checks with phi = Phi_u computed here.
inline IdentityReport verify_identities(const GridFunction& u, const ProblemSpec& spec, double tol = 1e-8,
                                        double poisson_tol = default_poisson_tol) {
  return verify_identities(u, reduction_map(u, spec, poisson_tol), spec, tol);
}

}  // namespace spbvp
