#pragma once

// Matrix-free Krylov solvers over GridFunction. Operators and preconditioners
// are callables GridFunction -> GridFunction.

#include <spbvp/errors.hpp>
#include <spbvp/grid.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace spbvp::krylov {

struct Stats {
  int iterations = 0;
  double residual_norm = 0.0;  // final ||b - A x||_2 (CG) or preconditioned estimate (MINRES)
  bool converged = false;
};

/// Conjugate gradients for SPD `op` from x = 0, stopping at
/// ||b - A x||_2 <= rel_tol ||b||_2. If `negative_curvature` is non-null,
/// p^T A p <= 0 is reported there and the iteration stops instead of failing.
template <class Op>
GridFunction cg(Op&& op, const GridFunction& b, double rel_tol, int max_iter, Stats* stats = nullptr,
                bool* negative_curvature = nullptr) {
  GridFunction x(b.grid());
  const double bnorm = std::sqrt(dot(b, b));
  Stats local;
  if (bnorm == 0.0) {
    local.converged = true;
    if (stats) *stats = local;
    return x;
  }
  GridFunction r = b;
  GridFunction p = b;
  double rr = dot(r, r);
  const double target = rel_tol * bnorm;
  for (int it = 0; it < max_iter; ++it) {
    GridFunction ap = op(p);
    const double pap = dot(p, ap);
    if (negative_curvature && pap <= 0.0) {
      *negative_curvature = true;
      local.iterations = it;
      local.residual_norm = std::sqrt(rr);
      if (stats) *stats = local;
      return x;
    }
    const double alpha = rr / pap;
    x.axpy(alpha, p);
    r.axpy(-alpha, ap);
    const double rr_new = dot(r, r);
    local.iterations = it + 1;
    if (std::sqrt(rr_new) <= target) {
      // The recursive residual drifts below the true one; confirm before stopping.
      r = b - op(x);
      const double true_rr = dot(r, r);
      if (std::sqrt(true_rr) <= target) {
        local.converged = true;
        local.residual_norm = std::sqrt(true_rr);
        if (stats) *stats = local;
        return x;
      }
      rr = true_rr;
      p = r;
      continue;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
  }
  local.residual_norm = std::sqrt(rr);
  if (stats) *stats = local;
  return x;
}

/// Preconditioned CG with SPD preconditioner `prec` (applies M^-1). Stops when
/// the M^-1 norm of the residual drops below rel_tol times its initial value.
/// Negative curvature p^T A p <= 0 is reported through `negative_curvature`.
template <class Op, class Prec>
GridFunction pcg(Op&& op, Prec&& prec, const GridFunction& b, double rel_tol, int max_iter,
                 Stats* stats, bool* negative_curvature) {
  GridFunction x(b.grid());
  Stats local;
  GridFunction r = b;
  GridFunction z = prec(r);
  double rz = dot(r, z);
  if (rz <= 0.0) {
    local.converged = true;
    if (stats) *stats = local;
    return x;
  }
  const double target = rel_tol * std::sqrt(rz);
  GridFunction p = z;
  for (int it = 0; it < max_iter; ++it) {
    GridFunction ap = op(p);
    const double pap = dot(p, ap);
    if (pap <= 0.0) {
      if (negative_curvature) *negative_curvature = true;
      local.iterations = it;
      local.residual_norm = std::sqrt(rz);
      if (stats) *stats = local;
      return x;
    }
    const double alpha = rz / pap;
    x.axpy(alpha, p);
    r.axpy(-alpha, ap);
    z = prec(r);
    const double rz_new = dot(r, z);
    local.iterations = it + 1;
    local.residual_norm = std::sqrt(std::max(rz_new, 0.0));
    if (local.residual_norm <= target) {
      local.converged = true;
      if (stats) *stats = local;
      return x;
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = z[i] + beta * p[i];
  }
  if (stats) *stats = local;
  return x;
}

/// Preconditioned MINRES for symmetric (possibly indefinite) `op` with SPD
/// preconditioner `prec`, from x = 0. Stops when the M^-1 norm of the residual
/// falls below rel_tol times its initial value.
template <class Op, class Prec>
GridFunction minres(Op&& op, Prec&& prec, const GridFunction& b, double rel_tol, int max_iter,
                    Stats* stats = nullptr) {
  const Grid& g = b.grid();
  GridFunction x(g);
  Stats local;

  GridFunction v_old(g);
  GridFunction v = b;
  GridFunction z = prec(v);
  double gamma = std::sqrt(std::max(dot(z, v), 0.0));
  if (gamma == 0.0) {
    local.converged = true;
    if (stats) *stats = local;
    return x;
  }
  double gamma_old = 1.0;
  double eta = gamma;
  const double target = rel_tol * gamma;
  double s_old = 0.0, s = 0.0, c_old = 1.0, c = 1.0;
  GridFunction w_old(g), w(g);

  for (int it = 0; it < max_iter; ++it) {
    z *= 1.0 / gamma;
    GridFunction az = op(z);
    const double delta = dot(az, z);
    // v_new = A z - (delta/gamma) v - (gamma/gamma_old) v_old
    GridFunction v_new = az;
    v_new.axpy(-delta / gamma, v);
    v_new.axpy(-gamma / gamma_old, v_old);
    GridFunction z_new = prec(v_new);
    const double gamma_new = std::sqrt(std::max(dot(z_new, v_new), 0.0));

    const double a0 = c * delta - c_old * s * gamma;
    const double a1 = std::hypot(a0, gamma_new);
    const double a2 = s * delta + c_old * c * gamma;
    const double a3 = s_old * gamma;
    const double c_new = a0 / a1;
    const double s_new = gamma_new / a1;

    GridFunction w_new = z;
    w_new.axpy(-a3, w_old);
    w_new.axpy(-a2, w);
    w_new *= 1.0 / a1;
    x.axpy(c_new * eta, w_new);
    eta = -s_new * eta;

    local.iterations = it + 1;
    local.residual_norm = std::abs(eta);
    if (std::abs(eta) <= target || gamma_new == 0.0) {
      local.converged = true;
      break;
    }
    v_old = std::move(v);
    v = std::move(v_new);
    z = std::move(z_new);
    w_old = std::move(w);
    w = std::move(w_new);
    gamma_old = gamma;
    gamma = gamma_new;
    c_old = c;
    c = c_new;
    s_old = s;
    s = s_new;
  }
  if (stats) *stats = local;
  return x;
}

}  // namespace spbvp::krylov
