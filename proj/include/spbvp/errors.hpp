#pragma once

#include <stdexcept>
#include <string>

namespace spbvp {

enum class SolverErrorKind {
  no_convergence,       // Poisson CG hit its iteration cap
  no_negative_endpoint, // endpoint doubling sweep found no negative energy
  collapsed_to_zero,    // mountain-pass maximum fell into the trivial solution
  non_positive_level,   // converged mountain-pass point with energy <= 0
  iteration_cap,
  diverged,
  indefinite_hessian,
};

inline const char* to_string(SolverErrorKind k) {
  switch (k) {
    case SolverErrorKind::no_convergence: return "no convergence";
    case SolverErrorKind::no_negative_endpoint: return "no negative endpoint found";
    case SolverErrorKind::collapsed_to_zero: return "collapsed to zero";
    case SolverErrorKind::non_positive_level: return "non-positive mountain-pass level";
    case SolverErrorKind::iteration_cap: return "iteration cap";
    case SolverErrorKind::diverged: return "diverged";
    case SolverErrorKind::indefinite_hessian: return "indefinite Hessian";
  }
  return "unknown";
}

class SolverError : public std::runtime_error {
 public:
  SolverError(SolverErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + (detail.empty() ? "" : ": " + detail)),
        kind_(kind) {}
  SolverErrorKind kind() const { return kind_; }

 private:
  SolverErrorKind kind_;
};

}  // namespace spbvp
