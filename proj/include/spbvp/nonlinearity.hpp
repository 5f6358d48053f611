#pragma once

// Built-in coupling nonlinearities f with primitive F, F(0) = 0.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace spbvp {

enum class NonlinearityKind { linear, power, critical };

inline std::string to_string(NonlinearityKind k) {
  switch (k) {
    case NonlinearityKind::linear: return "linear";
    case NonlinearityKind::power: return "power";
    case NonlinearityKind::critical: return "critical";
  }
  return "?";
}

/// linear:   f(s) = s,               F(s) = s^2 / 2
/// power(r): f(s) = |s|^(r-2) s,     F(s) = |s|^r / r      (r > 1, f(0) = 0)
/// critical: f(s) = |s|^3 s,         F(s) = |s|^5 / 5
///
/// Growth constants (c1, c2) default to (1, 1) for the bound |f(s)| <= c1 + c2 |s|^4.
class Nonlinearity {
 public:
  static Nonlinearity linear() { return Nonlinearity(NonlinearityKind::linear, 2.0); }
  static Nonlinearity critical() { return Nonlinearity(NonlinearityKind::critical, 5.0); }
  static Nonlinearity power(double r) {
    if (!(r > 1.0) || !std::isfinite(r)) {
      throw std::invalid_argument("power nonlinearity needs r > 1, got " + std::to_string(r));
    }
    return Nonlinearity(NonlinearityKind::power, r);
  }

  NonlinearityKind kind() const { return kind_; }
  /// Homogeneity degree of F (2 for linear, 5 for critical, r for power).
  double exponent() const { return r_; }
  double c1() const { return c1_; }
  double c2() const { return c2_; }
  Nonlinearity with_growth_constants(double c1, double c2) const {
    Nonlinearity out = *this;
    out.c1_ = c1;
    out.c2_ = c2;
    return out;
  }

  double f(double s) const {
    switch (kind_) {
      case NonlinearityKind::linear: return s;
      case NonlinearityKind::critical: {
        const double a = std::abs(s);
        return a * a * a * s;
      }
      case NonlinearityKind::power:
        if (s == 0.0) return 0.0;
        return std::pow(std::abs(s), r_ - 2.0) * s;
    }
    return 0.0;
  }

  double F(double s) const {
    const double a = std::abs(s);
    switch (kind_) {
      case NonlinearityKind::linear: return 0.5 * s * s;
      case NonlinearityKind::critical: return a * a * a * a * a / 5.0;
      case NonlinearityKind::power: return std::pow(a, r_) / r_;
    }
    return 0.0;
  }

  /// f'(s). For power(r) with r < 2 the derivative is unbounded at 0; 0 is
  /// returned there (the zero set is negligible for the matrix-free Hessian).
  double f_prime(double s) const {
    const double a = std::abs(s);
    switch (kind_) {
      case NonlinearityKind::linear: return 1.0;
      case NonlinearityKind::critical: return 4.0 * a * a * a;
      case NonlinearityKind::power:
        if (a == 0.0) return r_ == 2.0 ? 1.0 : 0.0;
        return (r_ - 1.0) * std::pow(a, r_ - 2.0);
    }
    return 0.0;
  }

  std::string name() const {
    if (kind_ == NonlinearityKind::power) return "power(" + format_exponent() + ")";
    return to_string(kind_);
  }

 private:
  Nonlinearity(NonlinearityKind kind, double r) : kind_(kind), r_(r) {}

  std::string format_exponent() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", r_);
    return buf;
  }

  NonlinearityKind kind_;
  double r_;
  double c1_ = 1.0;
  double c2_ = 1.0;
};

inline double eval_f(const Nonlinearity& nl, double s) { return nl.f(s); }
inline double eval_F(const Nonlinearity& nl, double s) { return nl.F(s); }

/// True iff |f(s)| <= c1 + c2 |s|^4 on `samples` evenly spaced points of [-s_max, s_max].
inline bool check_growth(const Nonlinearity& nl, double s_max, int samples) {
  if (!(s_max > 0.0) || samples < 2) {
    throw std::invalid_argument("check_growth needs s_max > 0 and samples >= 2");
  }
  for (int i = 0; i < samples; ++i) {
    const double s = -s_max + 2.0 * s_max * i / (samples - 1);
    const double s2 = s * s;
    if (std::abs(nl.f(s)) > nl.c1() + nl.c2() * s2 * s2) return false;
  }
  return true;
}

/// |F(s) - int_0^s f(t) dt| with the integral from adaptive Gauss-Kronrod.
inline double primitive_residual(const Nonlinearity& nl, double s) {
  if (s == 0.0) return 0.0;
  using boost::math::quadrature::gauss_kronrod;
  double err = 0.0;
  // Integrate over [0, |s|] and use oddness for negative s; the kink of
  // |t|^(r-2) t sits at the endpoint, where the adaptive rule copes.
  const double a = std::abs(s);
  const double q = gauss_kronrod<double, 31>::integrate([&](double t) { return nl.f(t); }, 0.0, a,
                                                        15, 1e-12, &err);
  return std::abs(nl.F(s) - q);
}

}  // namespace spbvp
