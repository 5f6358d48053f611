#pragma once

// Batch commands behind the spbvp executable. Each returns the process exit
// code and writes its human-readable output to `out`, diagnostics to `err`.

#include <spbvp/diagnostics.hpp>
#include <spbvp/io.hpp>
#include <spbvp/minimax.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace spbvp::cli {

enum ExitCode : int { ok = 0, error = 1, trivial = 2, verify_failed = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string path_in(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
}

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

enum class Outcome { converged, trivial, collapsed, failed };

struct RowResult {
  Outcome outcome = Outcome::failed;
  std::optional<SolveReport> report;
  std::string message;
};

inline RowResult solve_once(const ProblemSpec& spec, const SolverConfig& cfg) {
  RowResult res;
  try {
    res.report = run_solver(spec, cfg);
    res.outcome = is_nontrivial(*res.report, cfg) ? Outcome::converged : Outcome::trivial;
    if (res.outcome == Outcome::trivial) res.message = "converged to the trivial solution";
  } catch (const SolverError& e) {
    res.outcome = e.kind() == SolverErrorKind::collapsed_to_zero ? Outcome::collapsed : Outcome::failed;
    res.message = e.what();
  }
  return res;
}

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::converged: return "converged";
    case Outcome::trivial: return "trivial";
    case Outcome::collapsed: return "collapsed to zero";
    case Outcome::failed: return "failed";
  }
  return "?";
}

inline std::string describe(const ProblemSpec& s) {
  std::ostringstream o;
  o << "mode=" << to_string(s.mode) << " eps=" << s.epsilon << " eta=" << s.eta << " p=" << s.p << " q=" << s.q;
  if (s.nonlinearity.kind() == NonlinearityKind::power) o << " r=" << s.r;
  o << " f=" << s.nonlinearity.name();
  if (s.truncation_T) o << " T=" << *s.truncation_T;
  o << " n=" << s.grid.n_per_axis() << " L=" << s.grid.edge_length();
  return o.str();
}

inline std::string describe(const SolveReport& r) {
  std::ostringstream o;
  o.precision(10);
  o << "energy=" << r.energy_value << " residual=" << r.residual << " ||u||_H10=" << h10_norm(r.solution_u)
    << " max|u|=" << max_abs(r.solution_u) << " iterations=" << r.iterations
    << " trunc_active=" << (r.truncation_active ? 1 : 0);
  if (r.mp_level_estimate) o << " mp_level=" << *r.mp_level_estimate;
  return o.str();
}

// Deterministic sample field for verify: smooth low-mode fields for even k,
// nodal noise for odd k, both with max |u| = amp.
inline GridFunction verify_sample(const Grid& g, std::uint64_t seed, std::uint64_t k, double amp) {
  GridFunction u(g);
  if (k % 2 == 0) {
    u = random_smooth_direction(g, seed, k);
  } else {
    std::uint64_t state = spbvp::detail::splitmix(seed ^ spbvp::detail::splitmix(0x5EEDULL + k));
    for (std::size_t i = 0; i < u.size(); ++i) {
      state = spbvp::detail::splitmix(state);
      u[i] = 2.0 * (static_cast<double>(state >> 11) * 0x1.0p-53) - 1.0;
    }
  }
  const double m = max_abs(u);
  if (m > 0.0) u *= amp / m;
  return u;
}

}  // namespace detail

/// Single solve, or a multi-start search when the config sets starts > 0.
/// Writes u.spfd, phi.spfd, report.csv and summary.txt into out_dir.
inline int cmd_solve(const std::string& config_path, const std::string& out_dir, std::ostream& out,
                     std::ostream& err) {
  io::RunConfig cfg;
  try {
    cfg = io::load_config(config_path);
    detail::ensure_dir(out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return error;
  }
  std::ostringstream summary;
  summary << "problem: " << detail::describe(cfg.problem) << "\n";
  summary << "method: " << to_string(cfg.solver.method) << "\n";
  std::vector<io::ReportRow> rows;
  int code = ok;
  try {
    if (cfg.starts > 0) {
      const MultiStartResult res = multi_start_detailed(cfg.problem, cfg.solver, cfg.starts);
      for (const auto& o : res.outcomes) {
        summary << "start " << o.label << ": ";
        if (o.report) {
          summary << (o.converged ? "converged" : "not converged") << (o.nontrivial ? " nontrivial" : " trivial")
                  << " energy=" << detail::fmt("%.10g", o.report->energy_value);
          if (o.cluster >= 0) summary << " cluster=" << o.cluster;
        } else {
          summary << o.message;
        }
        summary << "\n";
      }
      for (std::size_t c = 0; c < res.clusters.size(); ++c) {
        const SolveReport& r = res.clusters[c];
        io::write_field(detail::path_in(out_dir, "u_" + std::to_string(c) + ".spfd"), r.solution_u);
        io::write_field(detail::path_in(out_dir, "phi_" + std::to_string(c) + ".spfd"), r.solution_phi);
        rows.push_back(io::make_row(r, cfg.problem, cfg.solver.method));
        summary << "couple " << c << ": " << detail::describe(r) << "\n";
      }
      if (!res.clusters.empty()) {
        io::write_field(detail::path_in(out_dir, "u.spfd"), res.clusters[0].solution_u);
        io::write_field(detail::path_in(out_dir, "phi.spfd"), res.clusters[0].solution_phi);
      }
      summary << "couples found: " << res.clusters.size() << "\n";
      code = res.clusters.empty() ? trivial : ok;
    } else {
      const detail::RowResult res = detail::solve_once(cfg.problem, cfg.solver);
      if (res.report) {
        io::write_field(detail::path_in(out_dir, "u.spfd"), res.report->solution_u);
        io::write_field(detail::path_in(out_dir, "phi.spfd"), res.report->solution_phi);
        rows.push_back(io::make_row(*res.report, cfg.problem, cfg.solver.method));
        summary << "solution: " << detail::describe(*res.report) << "\n";
      } else {
        rows.push_back(io::make_failed_row(cfg.problem, cfg.solver.method));
      }
      summary << "outcome: " << detail::outcome_name(res.outcome);
      if (!res.message.empty()) summary << " (" << res.message << ")";
      summary << "\n";
      code = res.outcome == detail::Outcome::converged ? ok
             : res.outcome == detail::Outcome::failed  ? error
                                                       : trivial;
    }
    io::write_report_csv(detail::path_in(out_dir, "report.csv"), rows);
    detail::write_text(detail::path_in(out_dir, "summary.txt"), summary.str());
  } catch (const std::exception& e) {
    out << summary.str();
    err << "error: " << e.what() << "\n";
    return error;
  }
  out << summary.str();
  if (code == error) err << "error: solver failed\n";
  return code;
}

/// Geometric sweep of q over [q_min, q_max]; rows solved on up to `threads`
/// workers, CSV assembled in row order.
inline int cmd_sweep(const std::string& config_path, double q_min, double q_max, int steps,
                     const std::string& out_dir, int threads, std::ostream& out, std::ostream& err) {
  if (steps < 2) throw UsageError("--steps must be at least 2");
  if (!(q_min > 0.0 && q_max > q_min)) throw UsageError("need 0 < --qmin < --qmax");
  if (threads < 1) throw UsageError("thread count must be positive");
  io::RunConfig cfg;
  try {
    cfg = io::load_config(config_path);
    detail::ensure_dir(out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return error;
  }
  std::vector<double> qs(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    qs[static_cast<std::size_t>(k)] = q_min * std::pow(q_max / q_min, static_cast<double>(k) / (steps - 1));
  }
  qs.back() = q_max;

  std::vector<detail::RowResult> results(qs.size());
  std::vector<ProblemSpec> specs(qs.size(), cfg.problem);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < qs.size(); i = next++) {
      try {
        specs[i].q = qs[i];
        specs[i].validate();
        results[i] = detail::solve_once(specs[i], cfg.solver);
        if (results[i].report) {
          const std::string stem = "row_" + std::to_string(i);
          io::write_field(detail::path_in(out_dir, stem + "_u.spfd"), results[i].report->solution_u);
          io::write_field(detail::path_in(out_dir, stem + "_phi.spfd"), results[i].report->solution_phi);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int nthreads = std::min<int>(threads, steps);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  try {
    if (failure) std::rethrow_exception(failure);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return error;
  }

  std::ostringstream summary;
  summary << "sweep: " << detail::describe(cfg.problem) << " q in [" << q_min << ", " << q_max << "], " << steps
          << " steps\n";
  std::vector<io::ReportRow> rows;
  std::optional<double> largest;
  bool any_trivial = false;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto& res = results[i];
    rows.push_back(res.report ? io::make_row(*res.report, specs[i], cfg.solver.method)
                              : io::make_failed_row(specs[i], cfg.solver.method));
    summary << "q=" << detail::fmt("%.6g", qs[i]) << ": " << detail::outcome_name(res.outcome);
    if (res.report) summary << " energy=" << detail::fmt("%.10g", res.report->energy_value);
    if (!res.message.empty() && res.outcome != detail::Outcome::converged) summary << " (" << res.message << ")";
    summary << "\n";
    if (res.outcome == detail::Outcome::converged) largest = qs[i];
    if (res.outcome == detail::Outcome::trivial || res.outcome == detail::Outcome::collapsed) any_trivial = true;
  }
  if (largest) {
    summary << "largest q with a converged nontrivial solution: " << detail::fmt("%.6g", *largest) << "\n";
  } else {
    summary << "no q produced a converged nontrivial solution\n";
  }
  try {
    io::write_report_csv(detail::path_in(out_dir, "sweep.csv"), rows);
    detail::write_text(detail::path_in(out_dir, "summary.txt"), summary.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return error;
  }
  out << summary.str();
  if (largest) return ok;
  return any_trivial ? trivial : error;
}

/// Identity battery on n_samples deterministic random fields. With
/// corrupt_phi the potential is perturbed on purpose, which must fail.
inline int cmd_verify(const std::string& config_path, int n_samples, std::optional<std::uint64_t> seed,
                      const std::string& out_dir, bool corrupt_phi, std::ostream& out, std::ostream& err) {
  if (n_samples < 1) throw UsageError("--samples must be at least 1");
  io::RunConfig cfg;
  try {
    cfg = io::load_config(config_path);
    detail::ensure_dir(out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return error;
  }
  const ProblemSpec& spec = cfg.problem;
  const std::uint64_t s = seed.value_or(cfg.solver.seed);
  std::ostringstream log;
  log << "sample,svista_rel,positivity,holder2_ratio,control_ratio,upper_min_slack,ne2_rel,passed\n";
  int failures = 0;
  std::optional<int> first_failure;
  double max_holder = 0.0, max_control = 0.0;
  try {
    for (int k = 0; k < n_samples; ++k) {
      const GridFunction u = detail::verify_sample(spec.grid, s, static_cast<std::uint64_t>(k), 1.5);
      GridFunction phi = reduction_map(u, spec, 1e-12);
      if (corrupt_phi) {
        const GridFunction noise = detail::verify_sample(spec.grid, s ^ 0xC0FFEEULL, static_cast<std::uint64_t>(k), 1.0);
        phi.axpy(1e-3 * std::max(max_abs(phi), 1e-300), noise);
      }
      const IdentityReport rep = verify_identities(u, phi, spec);
      bool passed = rep.passed();
      double ne2_rel = std::nan("");
      if (spec.mode == Mode::p_r) {
        const double scale = spec.r * inner(phi, apply_laplacian(phi));
        ne2_rel = scale > 0.0 ? nehari_residuals(u, phi, spec).second / scale : 0.0;
        passed = passed && ne2_rel <= 1e-8;
      }
      double slack = std::numeric_limits<double>::infinity();
      for (const auto& e : rep.upper) slack = std::min(slack, e.lhs - e.rhs);
      const double svista_scale = std::max(std::abs(rep.svista_lhs), std::abs(rep.svista_rhs));
      const double svista_rel = svista_scale > 0.0 ? rep.svista_residual / svista_scale : 0.0;
      if (rep.holder2_ratio) max_holder = std::max(max_holder, *rep.holder2_ratio);
      if (rep.control_ratio) max_control = std::max(max_control, *rep.control_ratio);
      log << k << ',' << io::format_double(svista_rel) << ',' << io::format_double(rep.positivity) << ','
          << io::format_double(rep.holder2_ratio.value_or(std::nan(""))) << ','
          << io::format_double(rep.control_ratio.value_or(std::nan(""))) << ',' << io::format_double(slack) << ','
          << io::format_double(ne2_rel) << ',' << (passed ? 1 : 0) << "\n";
      if (!passed) {
        ++failures;
        if (!first_failure) {
          first_failure = k;
          io::write_field(detail::path_in(out_dir, "failing_u.spfd"), u);
          io::write_field(detail::path_in(out_dir, "failing_phi.spfd"), phi);
          out << "sample " << k << " failed: svista " << (rep.svista_ok() ? "ok" : "FAIL") << ", positivity "
              << (rep.positivity_ok() ? "ok" : "FAIL") << ", upper estimate " << (rep.upper_ok() ? "ok" : "FAIL")
              << " (relative svista residual " << detail::fmt("%.3e", svista_rel) << ")\n";
        }
      }
    }
    detail::write_text(detail::path_in(out_dir, "verify.csv"), log.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return error;
  }
  out << "verify: " << detail::describe(spec) << ", " << n_samples << " samples, seed " << s
      << (corrupt_phi ? ", corrupted potential" : "") << "\n";
  out << "measured max ||grad Phi|| / (q ||F(u)||_6/5) = " << detail::fmt("%.6g", max_holder) << "\n";
  out << "measured max int F Phi / (q (||u||_6/5^2 + ||u||_6^10)) = " << detail::fmt("%.6g", max_control) << "\n";
  if (failures > 0) {
    out << failures << " of " << n_samples << " samples failed; first failing sample " << *first_failure
        << " written to " << detail::path_in(out_dir, "failing_u.spfd") << "\n";
    return verify_failed;
  }
  out << "all " << n_samples << " samples passed\n";
  return ok;
}

/// Pohozaev combination on supplied fields, on `random` random fields, or on
/// fresh solutions over the configured refinement sequence.
inline int cmd_pohozaev(const std::string& config_path, const std::vector<std::string>& field_paths,
                        const std::string& out_dir, int random, std::ostream& out, std::ostream& err) {
  if (field_paths.size() > 2) throw UsageError("--fields takes u and optionally phi");
  if (random < 0) throw UsageError("--random must be nonnegative");
  if (random > 0 && !field_paths.empty()) throw UsageError("--random and --fields are exclusive");
  io::RunConfig cfg;
  try {
    cfg = io::load_config(config_path);
    if (cfg.problem.mode != Mode::p_r) {
      err << "error: pohozaev needs a P_r configuration (mode = P_r)\n";
      return error;
    }
    detail::ensure_dir(out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return error;
  }
  const double lower_coef = (5.0 - cfg.problem.p) / (2.0 * (cfg.problem.p + 1.0));
  auto print_terms = [&](const PohozaevTerms& t, const GridFunction& u, const ProblemSpec& spec) {
    out << "  R = " << detail::fmt("%.10g", t.total()) << "\n";
    out << "    (r-5)/4 ||grad Phi||^2       = " << detail::fmt("%.10g", t.field_energy) << "\n";
    out << "    (5-p)/(2(p+1)) ||u||^(p+1)   = " << detail::fmt("%.10g", t.power) << "\n";
    out << "    1/2 int |du/dn|^2 x.n        = " << detail::fmt("%.10g", t.boundary_u) << "\n";
    out << "    1/4 int |dPhi/dn|^2 x.n      = " << detail::fmt("%.10g", t.boundary_phi) << "\n";
    if (spec.r >= 5.0) {
      const double bound = lower_coef * power_integral(u, spec.p);
      out << "    lower bound (5-p)/(2(p+1)) ||u||_{p+1}^{p+1} = " << detail::fmt("%.10g", bound)
          << (t.total() >= bound ? "  (R >= bound)" : "  (R < bound)") << "\n";
    }
  };
  std::ostringstream csv;
  csv << "label,n,h,R,field_energy,power,boundary_u,boundary_phi,ratio\n";
  auto csv_row = [&](const std::string& label, const Grid& g, const PohozaevTerms& t, double ratio) {
    csv << label << ',' << g.n_per_axis() << ',' << io::format_double(g.spacing()) << ','
        << io::format_double(t.total()) << ',' << io::format_double(t.field_energy) << ','
        << io::format_double(t.power) << ',' << io::format_double(t.boundary_u) << ','
        << io::format_double(t.boundary_phi) << ',' << io::format_double(ratio) << "\n";
  };
  try {
    if (!field_paths.empty()) {
      const GridFunction u = io::read_field(field_paths[0]);
      ProblemSpec spec = cfg.problem;
      spec.grid = u.grid();
      const GridFunction phi =
          field_paths.size() == 2 ? io::read_field(field_paths[1], u.grid()) : reduction_map(u, spec, 1e-12);
      const PohozaevTerms t = pohozaev_terms(u, phi, spec);
      out << "pohozaev on " << field_paths[0] << (field_paths.size() == 2 ? " and " + field_paths[1] : "") << "\n";
      print_terms(t, u, spec);
      csv_row("fields", spec.grid, t, std::nan(""));
    } else if (random > 0) {
      out << "pohozaev on " << random << " random fields with Phi = Phi_u, seed " << cfg.solver.seed << "\n";
      double worst_gap = std::numeric_limits<double>::infinity();
      for (int k = 0; k < random; ++k) {
        const GridFunction u =
            detail::verify_sample(cfg.problem.grid, cfg.solver.seed, static_cast<std::uint64_t>(k), 1.5);
        const GridFunction phi = reduction_map(u, cfg.problem, 1e-12);
        const PohozaevTerms t = pohozaev_terms(u, phi, cfg.problem);
        worst_gap = std::min(worst_gap, t.total() - lower_coef * power_integral(u, cfg.problem.p));
        if (k == 0) {
          out << " sample 0:\n";
          print_terms(t, u, cfg.problem);
        }
        csv_row("random" + std::to_string(k), cfg.problem.grid, t, std::nan(""));
      }
      out << "  min over samples of R - (5-p)/(2(p+1)) ||u||_{p+1}^{p+1} = " << detail::fmt("%.6g", worst_gap)
          << "\n";
    } else {
      std::vector<int> sizes = cfg.refine.empty() ? std::vector<int>{cfg.problem.grid.n_per_axis()} : cfg.refine;
      std::optional<SolveReport> prev;
      std::optional<double> prev_R;
      SolverConfig scfg = cfg.solver;
      scfg.residual_tol = std::min(scfg.residual_tol, 1e-9);
      out << "pohozaev at solutions: " << detail::describe(cfg.problem) << "\n";
      out << "     n          h                 R      |R| ratio\n";
      for (int n : sizes) {
        ProblemSpec spec = cfg.problem;
        spec.grid = Grid(n, cfg.problem.grid.edge_length());
        std::optional<SolveReport> rep;
        if (prev && prev->solution_u.grid().n_per_axis() * 2 + 1 == n) {
          try {
            rep = newton_refine(prolong(prev->solution_u, spec.grid), spec, scfg);
            if (!is_nontrivial(*rep, scfg)) rep.reset();
          } catch (const SolverError&) {
            rep.reset();
          }
        }
        if (!rep) {
          const detail::RowResult res = detail::solve_once(spec, scfg);
          if (res.outcome != detail::Outcome::converged) {
            out << std::string(6 - std::min<std::size_t>(6, std::to_string(n).size()), ' ') << n << "  "
                << detail::outcome_name(res.outcome) << " " << res.message << "\n";
            prev.reset();
            prev_R.reset();
            continue;
          }
          rep = res.report;
        }
        const PohozaevTerms t = pohozaev_terms(rep->solution_u, rep->solution_phi, spec);
        const double ratio = prev_R ? std::abs(*prev_R) / std::abs(t.total()) : std::nan("");
        char line[160];
        std::snprintf(line, sizeof line, "%6d  %9.6f  %16.9e  %9.4f\n", n, spec.grid.spacing(), t.total(), ratio);
        out << line;
        csv_row("solution", spec.grid, t, ratio);
        prev = std::move(rep);
        prev_R = t.total();
      }
    }
    detail::write_text(detail::path_in(out_dir, "pohozaev.csv"), csv.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return error;
  }
  return ok;
}

}  // namespace spbvp::cli
