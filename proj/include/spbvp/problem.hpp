#pragma once

#include <spbvp/grid.hpp>
#include <spbvp/nonlinearity.hpp>

#include <optional>
#include <stdexcept>
#include <string>

namespace spbvp {

/// general: -Lap u + eps q Phi f(u) = eta |u|^(p-1) u,  -Lap Phi = 2 q F(u)
/// p_r:     -Lap u - q |u|^(r-2) u Phi + |u|^(p-1) u = 0,  -r Lap Phi = 2 q |u|^r
///
/// The p_r system is the general one with eps = eta = -1 and f = power(r); the
/// factor r in the second equation is exactly F(u) = |u|^r / r.
enum class Mode { general, p_r };

inline std::string to_string(Mode m) { return m == Mode::general ? "general" : "P_r"; }

struct ProblemSpec {
  int epsilon = 1;
  int eta = 1;
  double p = 3.0;
  double q = 0.05;
  Nonlinearity nonlinearity = Nonlinearity::critical();
  Mode mode = Mode::general;
  double r = 3.0;
  std::optional<double> truncation_T;
  Grid grid{15, 1.0};

  static ProblemSpec general_mode(const Grid& grid, int epsilon, int eta, double p, double q,
                                  const Nonlinearity& nl, std::optional<double> T = std::nullopt) {
    ProblemSpec s;
    s.grid = grid;
    s.epsilon = epsilon;
    s.eta = eta;
    s.p = p;
    s.q = q;
    s.nonlinearity = nl;
    s.mode = Mode::general;
    s.truncation_T = T;
    if (nl.kind() == NonlinearityKind::power) s.r = nl.exponent();
    s.validate();
    return s;
  }

  static ProblemSpec p_r_mode(const Grid& grid, double p, double q, double r) {
    ProblemSpec s;
    s.grid = grid;
    s.epsilon = -1;
    s.eta = -1;
    s.p = p;
    s.q = q;
    s.r = r;
    s.nonlinearity = Nonlinearity::power(r);
    s.mode = Mode::p_r;
    s.validate();
    return s;
  }

  void validate() const {
    if (epsilon != 1 && epsilon != -1) throw std::invalid_argument("epsilon must be +1 or -1");
    if (eta != 1 && eta != -1) throw std::invalid_argument("eta must be +1 or -1");
    if (!(p > 1.0 && p < 5.0)) throw std::invalid_argument("p must lie in (1, 5)");
    if (!(q >= 0.0) || !std::isfinite(q)) throw std::invalid_argument("q must be finite and >= 0");
    if (truncation_T && !(*truncation_T > 0.0)) {
      throw std::invalid_argument("truncation radius T must be positive");
    }
    if (mode == Mode::p_r) {
      if (!(q > 0.0)) throw std::invalid_argument("P_r mode needs q > 0");
      if (!(r > 1.0)) throw std::invalid_argument("P_r mode needs r > 1");
      if (epsilon != -1 || eta != -1) throw std::invalid_argument("P_r mode fixes epsilon = eta = -1");
      if (nonlinearity.kind() != NonlinearityKind::power || nonlinearity.exponent() != r) {
        throw std::invalid_argument("P_r mode uses the power(r) nonlinearity");
      }
    }
  }
};

}  // namespace spbvp
