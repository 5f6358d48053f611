#pragma once

// Uniform finite-difference discretization of the centered cube, rectangle-rule
// quadrature, discrete norms and the 7-point Dirichlet Laplacian.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spbvp {

/// Interior nodes of the cube [-L/2, L/2]^3, n per axis, spacing h = L/(n+1).
class Grid {
 public:
  Grid(int n_per_axis, double edge_length)
      : n_(n_per_axis), length_(edge_length) {
    if (n_per_axis < 3) {
      throw std::invalid_argument("grid needs at least 3 interior nodes per axis, got " +
                                  std::to_string(n_per_axis));
    }
    if (!(edge_length > 0.0) || !std::isfinite(edge_length)) {
      throw std::invalid_argument("grid edge length must be positive and finite");
    }
  }

  int n_per_axis() const { return n_; }
  double edge_length() const { return length_; }
  double spacing() const { return length_ / (n_ + 1); }
  double cell_volume() const { double h = spacing(); return h * h * h; }
  std::size_t node_count() const {
    auto n = static_cast<std::size_t>(n_);
    return n * n * n;
  }

  /// Coordinate of interior node i (0-based) along any axis.
  double coordinate(int i) const { return -0.5 * length_ + (i + 1) * spacing(); }

  /// Row-major, x fastest.
  std::size_t index(int i, int j, int k) const {
    auto n = static_cast<std::size_t>(n_);
    return static_cast<std::size_t>(i) + n * (static_cast<std::size_t>(j) + n * static_cast<std::size_t>(k));
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int n_;
  double length_;
};

/// Real field on the interior nodes; zero trace on the boundary is implicit.
class GridFunction {
 public:
  explicit GridFunction(const Grid& grid) : grid_(grid), values_(grid.node_count(), 0.0) {}

  GridFunction(const Grid& grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.node_count()) {
      throw std::invalid_argument("grid function length does not match node count");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw std::invalid_argument("grid function entries must be finite");
    }
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(int i, int j, int k) { return values_[grid_.index(i, j, k)]; }
  double at(int i, int j, int k) const { return values_[grid_.index(i, j, k)]; }

  GridFunction& operator+=(const GridFunction& o) {
    assert(o.grid_ == grid_);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    assert(o.grid_ == grid_);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  GridFunction& operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
  }
  /// this += a * x
  GridFunction& axpy(double a, const GridFunction& x) {
    assert(x.grid_ == grid_);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * x.values_[i];
    return *this;
  }

  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(double s, GridFunction a) { return a *= s; }
  friend GridFunction operator-(GridFunction a) { return a *= -1.0; }

  bool is_zero() const {
    for (double v : values_) if (v != 0.0) return false;
    return true;
  }

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// Pointwise map g_i = fn(u_i).
template <class Fn>
GridFunction map(const GridFunction& u, Fn&& fn) {
  GridFunction out(u.grid());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = fn(u[i]);
  return out;
}

/// Pointwise product.
inline GridFunction hadamard(const GridFunction& a, const GridFunction& b) {
  assert(a.grid() == b.grid());
  GridFunction out(a.grid());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

/// Plain Euclidean sum  sum_i a_i b_i  (no quadrature weight).
inline double dot(const GridFunction& a, const GridFunction& b) {
  assert(a.grid() == b.grid());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Samples fn(x, y, z) at every interior node.
template <class Fn>
GridFunction sample(const Grid& grid, Fn&& fn) {
  GridFunction out(grid);
  const int n = grid.n_per_axis();
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        out.at(i, j, k) = fn(grid.coordinate(i), grid.coordinate(j), grid.coordinate(k));
  return out;
}

/// 7-point stencil for -Laplace with homogeneous Dirichlet data:
/// v_i = (6 u_i - sum of neighbours) / h^2, missing neighbours are zero.
inline GridFunction apply_laplacian(const GridFunction& u) {
  const Grid& g = u.grid();
  const int n = g.n_per_axis();
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
  const std::size_t sy = static_cast<std::size_t>(n);
  const std::size_t sz = sy * sy;
  GridFunction v(g);
  const double* x = u.data();
  double* y = v.data();
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      const std::size_t row = g.index(0, j, k);
      for (int i = 0; i < n; ++i) {
        const std::size_t c = row + static_cast<std::size_t>(i);
        // Neighbour pairs are summed axis by axis so that mirror-symmetric
        // inputs produce exactly mirror-symmetric outputs.
        const double xm = i > 0 ? x[c - 1] : 0.0;
        const double xp = i < n - 1 ? x[c + 1] : 0.0;
        const double ym = j > 0 ? x[c - sy] : 0.0;
        const double yp = j < n - 1 ? x[c + sy] : 0.0;
        const double zm = k > 0 ? x[c - sz] : 0.0;
        const double zp = k < n - 1 ? x[c + sz] : 0.0;
        y[c] = (6.0 * x[c] - ((xm + xp) + (ym + yp) + (zm + zp))) * inv_h2;
      }
    }
  }
  return v;
}

/// Rectangle rule h^3 * sum_i g_i.
inline double integrate(const GridFunction& g) {
  double s = 0.0;
  for (double v : g.values()) s += v;
  return g.grid().cell_volume() * s;
}

/// h^3 * sum_i a_i b_i.
inline double inner(const GridFunction& a, const GridFunction& b) {
  return a.grid().cell_volume() * dot(a, b);
}

inline double lp_norm(const GridFunction& g, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm requires p >= 1");
  double s = 0.0;
  for (double v : g.values()) s += std::pow(std::abs(v), p);
  return std::pow(g.grid().cell_volume() * s, 1.0 / p);
}

inline double max_abs(const GridFunction& g) {
  double m = 0.0;
  for (double v : g.values()) m = std::max(m, std::abs(v));
  return m;
}

/// sqrt(h^3 u^T A u), the discrete H^1_0 norm.
inline double h10_norm(const GridFunction& u) {
  const double e = inner(u, apply_laplacian(u));
  return std::sqrt(std::max(e, 0.0));
}

/// One-dimensional eigenvalue (2 - 2 cos(pi k h / L)) / h^2 of the second difference.
inline double axis_eigenvalue(const Grid& grid, int k) {
  const double h = grid.spacing();
  return (2.0 - 2.0 * std::cos(std::numbers::pi * k / (grid.n_per_axis() + 1))) / (h * h);
}

/// Eigenvalue of the 3-D stencil for mode (kx, ky, kz).
inline double stencil_eigenvalue(const Grid& grid, int kx, int ky, int kz) {
  return axis_eigenvalue(grid, kx) + axis_eigenvalue(grid, ky) + axis_eigenvalue(grid, kz);
}

/// Smallest stencil eigenvalue, mode (1,1,1).
inline double smallest_eigenvalue(const Grid& grid) { return stencil_eigenvalue(grid, 1, 1, 1); }

/// prod_d sin(pi k_d (x_d + L/2) / L) sampled at the nodes; an exact
/// eigenvector of apply_laplacian.
inline GridFunction eigenfunction(const Grid& grid, int kx, int ky, int kz) {
  const int n = grid.n_per_axis();
  auto table = [&](int k) {
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      t[static_cast<std::size_t>(i)] = std::sin(std::numbers::pi * k * (i + 1) / (n + 1));
    return t;
  };
  const auto sx = table(kx), sy = table(ky), sz = table(kz);
  GridFunction out(grid);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        out.at(i, j, k) = sx[static_cast<std::size_t>(i)] * sy[static_cast<std::size_t>(j)] *
                          sz[static_cast<std::size_t>(k)];
  return out;
}

/// Trilinear transfer from a coarse grid onto a fine grid with the same edge
/// length and n_fine + 1 = 2 (n_coarse + 1) (nested nodes).
inline GridFunction prolong(const GridFunction& coarse, const Grid& fine) {
  const Grid& cg = coarse.grid();
  const int nc = cg.n_per_axis();
  const int nf = fine.n_per_axis();
  if (nf + 1 != 2 * (nc + 1) || fine.edge_length() != cg.edge_length()) {
    throw std::invalid_argument("prolong needs nested grids with n_fine + 1 = 2 (n_coarse + 1)");
  }
  // Coarse value at extended index I in [0, nc+1]; boundary layers are zero.
  auto cval = [&](int i, int j, int k) {
    if (i <= 0 || j <= 0 || k <= 0 || i > nc || j > nc || k > nc) return 0.0;
    return coarse.at(i - 1, j - 1, k - 1);
  };
  GridFunction out(fine);
  for (int k = 0; k < nf; ++k) {
    for (int j = 0; j < nf; ++j) {
      for (int i = 0; i < nf; ++i) {
        // Fine extended index F = i+1 sits at coarse position F/2.
        const int fi = i + 1, fj = j + 1, fk = k + 1;
        const int i0 = fi / 2, j0 = fj / 2, k0 = fk / 2;
        const double wi = (fi % 2) * 0.5, wj = (fj % 2) * 0.5, wk = (fk % 2) * 0.5;
        double s = 0.0;
        for (int dk = 0; dk < 2; ++dk)
          for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di) {
              const double w = (di ? wi : 1.0 - wi) * (dj ? wj : 1.0 - wj) * (dk ? wk : 1.0 - wk);
              if (w != 0.0) s += w * cval(i0 + di, j0 + dj, k0 + dk);
            }
        out.at(i, j, k) = s;
      }
    }
  }
  return out;
}

}  // namespace spbvp
