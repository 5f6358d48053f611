#pragma once

// Field files, CSV run reports and INI run configurations.

#include <spbvp/diagnostics.hpp>
#include <spbvp/minimax.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace spbvp::io {

// ---------------------------------------------------------------------------
// Field files: "SPFD01", three uint32 dims, float64 edge length, float64
// payload in x-fastest order. Everything little-endian.

enum class FieldErrorKind { bad_magic, dims_mismatch, truncated_payload, io_failure };

inline const char* to_string(FieldErrorKind k) {
  switch (k) {
    case FieldErrorKind::bad_magic: return "bad magic";
    case FieldErrorKind::dims_mismatch: return "dims mismatch";
    case FieldErrorKind::truncated_payload: return "truncated payload";
    case FieldErrorKind::io_failure: return "I/O failure";
  }
  return "unknown";
}

class FieldError : public std::runtime_error {
 public:
  FieldError(FieldErrorKind kind, const std::string& path, const std::string& detail = "")
      : std::runtime_error(std::string(to_string(kind)) + ": " + path + (detail.empty() ? "" : " (" + detail + ")")),
        kind_(kind) {}
  FieldErrorKind kind() const { return kind_; }

 private:
  FieldErrorKind kind_;
};

inline constexpr std::array<char, 6> field_magic{'S', 'P', 'F', 'D', '0', '1'};
inline constexpr std::size_t field_header_bytes = 6 + 3 * 4 + 8;

namespace detail {

inline void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

}  // namespace detail

inline std::string encode_field(const GridFunction& u) {
  const Grid& g = u.grid();
  std::string out(field_magic.begin(), field_magic.end());
  out.reserve(field_header_bytes + 8 * u.size());
  const auto n = static_cast<std::uint64_t>(g.n_per_axis());
  for (int d = 0; d < 3; ++d) detail::put_le(out, n, 4);
  detail::put_le(out, std::bit_cast<std::uint64_t>(g.edge_length()), 8);
  for (double v : u.values()) detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

/// Decodes a field image; `origin` only labels errors.
inline GridFunction decode_field(const std::string& bytes, const std::string& origin = "<memory>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 6 || !std::equal(field_magic.begin(), field_magic.end(), bytes.begin())) {
    throw FieldError(FieldErrorKind::bad_magic, origin);
  }
  if (bytes.size() < field_header_bytes) throw FieldError(FieldErrorKind::truncated_payload, origin, "short header");
  const auto nx = detail::get_le(p + 6, 4), ny = detail::get_le(p + 10, 4), nz = detail::get_le(p + 14, 4);
  if (nx != ny || ny != nz || nx < 3 || nx > 4096) {
    throw FieldError(FieldErrorKind::dims_mismatch, origin,
                     std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz));
  }
  const double length = std::bit_cast<double>(detail::get_le(p + 18, 8));
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw FieldError(FieldErrorKind::dims_mismatch, origin, "edge length " + std::to_string(length));
  }
  const Grid g(static_cast<int>(nx), length);
  const std::size_t expected = field_header_bytes + 8 * g.node_count();
  if (bytes.size() < expected) {
    throw FieldError(FieldErrorKind::truncated_payload, origin,
                     std::to_string(bytes.size()) + " of " + std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw FieldError(FieldErrorKind::dims_mismatch, origin, "payload longer than dims imply");
  }
  GridFunction u(g);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = std::bit_cast<double>(detail::get_le(p + field_header_bytes + 8 * i, 8));
  }
  return u;
}

inline void write_field(const std::string& path, const GridFunction& u) {
  const std::string bytes = encode_field(u);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FieldError(FieldErrorKind::io_failure, path, "cannot open for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.close();
  if (!f) throw FieldError(FieldErrorKind::io_failure, path, "write failed");
}

inline GridFunction read_field(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FieldError(FieldErrorKind::io_failure, path, "cannot open for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw FieldError(FieldErrorKind::io_failure, path, "read failed");
  return decode_field(ss.str(), path);
}

/// Reads a field and checks it lives on `expected`.
inline GridFunction read_field(const std::string& path, const Grid& expected) {
  GridFunction u = read_field(path);
  if (!(u.grid() == expected)) {
    throw FieldError(FieldErrorKind::dims_mismatch, path,
                     "n = " + std::to_string(u.grid().n_per_axis()) + ", expected " +
                         std::to_string(expected.n_per_axis()));
  }
  return u;
}

// ---------------------------------------------------------------------------
// CSV reports.

inline constexpr const char* csv_header =
    "q,mode,p,r,method,energy,residual,mp_level,iters,trunc_active,svista_res,pohozaev_res,ne1_res,ne2_res,"
    "norm_h10,norm_lp1";

struct ReportRow {
  double q = 0.0;
  std::string mode;
  double p = 0.0;
  double r = std::numeric_limits<double>::quiet_NaN();
  std::string method;
  double energy = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  double mp_level = std::numeric_limits<double>::quiet_NaN();
  long iters = 0;
  bool trunc_active = false;
  double svista_res = std::numeric_limits<double>::quiet_NaN();
  double pohozaev_res = std::numeric_limits<double>::quiet_NaN();
  double ne1_res = std::numeric_limits<double>::quiet_NaN();
  double ne2_res = std::numeric_limits<double>::quiet_NaN();
  double norm_h10 = std::numeric_limits<double>::quiet_NaN();
  double norm_lp1 = std::numeric_limits<double>::quiet_NaN();
};

/// Row for a finished solve. svista_res is relative to ||grad Phi||^2; the
/// P_r-only columns are NaN in general mode.
inline ReportRow make_row(const SolveReport& rep, const ProblemSpec& spec, Method method) {
  ReportRow row;
  row.q = spec.q;
  row.mode = to_string(spec.mode);
  row.p = spec.p;
  if (spec.nonlinearity.kind() == NonlinearityKind::power) row.r = spec.r;
  row.method = to_string(method);
  row.energy = rep.energy_value;
  row.residual = rep.residual;
  if (rep.mp_level_estimate) row.mp_level = *rep.mp_level_estimate;
  row.iters = rep.iterations;
  row.trunc_active = rep.truncation_active;
  const GridFunction Fu = map(rep.solution_u, [&](double s) { return spec.nonlinearity.F(s); });
  const double lhs = inner(rep.solution_phi, apply_laplacian(rep.solution_phi));
  const double rhs = 2.0 * spec.q * inner(Fu, rep.solution_phi);
  const double scale = std::max(std::abs(lhs), std::abs(rhs));
  row.svista_res = scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0;
  if (spec.mode == Mode::p_r) {
    row.pohozaev_res = pohozaev_residual(rep.solution_u, rep.solution_phi, spec);
    const auto [n1, n2] = nehari_residuals(rep.solution_u, rep.solution_phi, spec);
    row.ne1_res = n1;
    row.ne2_res = n2;
  }
  row.norm_h10 = h10_norm(rep.solution_u);
  row.norm_lp1 = lp_norm(rep.solution_u, spec.p + 1.0);
  return row;
}

/// Row for a solve that failed: parameters filled, results NaN.
inline ReportRow make_failed_row(const ProblemSpec& spec, Method method) {
  ReportRow row;
  row.q = spec.q;
  row.mode = to_string(spec.mode);
  row.p = spec.p;
  if (spec.nonlinearity.kind() == NonlinearityKind::power) row.r = spec.r;
  row.method = to_string(method);
  row.iters = -1;
  return row;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_row(const ReportRow& r) {
  std::string s;
  auto num = [&](double v) {
    s += format_double(v);
    s += ',';
  };
  num(r.q);
  s += r.mode + ',';
  num(r.p);
  num(r.r);
  s += r.method + ',';
  num(r.energy);
  num(r.residual);
  num(r.mp_level);
  s += std::to_string(r.iters) + ',';
  s += r.trunc_active ? "1," : "0,";
  num(r.svista_res);
  num(r.pohozaev_res);
  num(r.ne1_res);
  num(r.ne2_res);
  num(r.norm_h10);
  s += format_double(r.norm_lp1);
  return s;
}

inline std::string format_csv(const std::vector<ReportRow>& rows) {
  std::string out = std::string(csv_header) + "\n";
  for (const auto& r : rows) out += format_row(r) + "\n";
  return out;
}

inline void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("I/O failure: cannot open " + path + " for writing");
  const std::string text = format_csv(rows);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.close();
  if (!f) throw std::runtime_error("I/O failure: write to " + path + " failed");
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_csv_double(const std::string& s, int line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("CSV line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace detail

/// Parses a file written by write_report_csv.
inline std::vector<ReportRow> read_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("I/O failure: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != csv_header) throw std::runtime_error("CSV header mismatch in " + path);
  std::vector<ReportRow> rows;
  for (int ln = 2; std::getline(f, line); ++ln) {
    const auto c = detail::split(line, ',');
    if (c.size() != 16) throw std::runtime_error("CSV line " + std::to_string(ln) + ": expected 16 columns");
    ReportRow r;
    r.q = detail::parse_csv_double(c[0], ln);
    r.mode = c[1];
    r.p = detail::parse_csv_double(c[2], ln);
    r.r = detail::parse_csv_double(c[3], ln);
    r.method = c[4];
    r.energy = detail::parse_csv_double(c[5], ln);
    r.residual = detail::parse_csv_double(c[6], ln);
    r.mp_level = detail::parse_csv_double(c[7], ln);
    r.iters = std::stol(c[8]);
    r.trunc_active = c[9] == "1";
    r.svista_res = detail::parse_csv_double(c[10], ln);
    r.pohozaev_res = detail::parse_csv_double(c[11], ln);
    r.ne1_res = detail::parse_csv_double(c[12], ln);
    r.ne2_res = detail::parse_csv_double(c[13], ln);
    r.norm_h10 = detail::parse_csv_double(c[14], ln);
    r.norm_lp1 = detail::parse_csv_double(c[15], ln);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Run configuration.
//
//   [problem] mode epsilon eta p q r nonlinearity trunc_T
//   [grid]    n length refine
//   [solver]  method tol max_iter path_points seed starts cluster_tol
//             descent_step endpoint_scale init_amplitude warm_tol start inner
//             inner_tol newton_max_iters poisson_tol threads
//
// '#' and ';' start comments. Keys may appear once.

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, int line, const std::string& message)
      : std::runtime_error("config line " + std::to_string(line) + (key.empty() ? "" : ", key '" + key + "'") +
                           ": " + message),
        key_(key),
        line_(line) {}
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

struct RunConfig {
  ProblemSpec problem;
  SolverConfig solver;
  int starts = 0;            // 0: single solve; otherwise multi-start with this many random starts
  std::vector<int> refine;   // grid sizes for the Pohozaev refinement table
};

namespace detail {

struct Entry {
  std::string value;
  int line = 0;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const Entry& e) {
  T v{};
  const std::string& s = e.value;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key, e.line, "expected a number, got '" + s + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError(key, e.line, "value must be finite");
  }
  return v;
}

}  // namespace detail

/// Parses configuration text. Every failure names the key and line.
inline RunConfig parse_config(const std::string& text) {
  static const std::map<std::string, std::vector<std::string>> allowed = {
      {"problem", {"mode", "epsilon", "eta", "p", "q", "r", "nonlinearity", "trunc_T"}},
      {"grid", {"n", "length", "refine"}},
      {"solver",
       {"method", "tol", "max_iter", "path_points", "seed", "starts", "cluster_tol", "descent_step", "endpoint_scale",
        "init_amplitude", "warm_tol", "start", "inner", "inner_tol", "newton_max_iters", "poisson_tol", "threads"}},
  };
  std::map<std::string, detail::Entry> entries;  // "section.key"
  std::string section;
  std::istringstream in(text);
  std::string raw;
  for (int ln = 1; std::getline(in, raw); ++ln) {
    std::string line = raw;
    const auto c = line.find_first_of("#;");
    if (c != std::string::npos) line.erase(c);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", ln, "malformed section header '" + line + "'");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!allowed.count(section)) throw ConfigError(section, ln, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line, ln, "expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("", ln, "missing key before '='");
    if (section.empty()) throw ConfigError(key, ln, "key outside any section");
    const auto& keys = allowed.at(section);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(key, ln, "unknown key in [" + section + "]");
    }
    if (value.empty()) throw ConfigError(key, ln, "missing value");
    const std::string full = section + "." + key;
    if (entries.count(full)) {
      throw ConfigError(key, ln, "duplicate key (first on line " + std::to_string(entries[full].line) + ")");
    }
    entries[full] = {value, ln};
  }

  auto has = [&](const std::string& k) { return entries.count(k) > 0; };
  auto entry = [&](const std::string& k) -> const detail::Entry& { return entries.at(k); };
  auto key_of = [](const std::string& k) { return k.substr(k.find('.') + 1); };
  auto num = [&](const std::string& k, double fallback) {
    return has(k) ? detail::parse_number<double>(key_of(k), entry(k)) : fallback;
  };
  auto integer = [&](const std::string& k, long long fallback) {
    return has(k) ? detail::parse_number<long long>(key_of(k), entry(k)) : fallback;
  };
  auto line_of = [&](const std::string& k) { return has(k) ? entry(k).line : 0; };
  auto check = [&](const std::string& k, bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(key_of(k), line_of(k), msg);
  };

  RunConfig cfg;

  // [grid]
  const long long n = integer("grid.n", 15);
  check("grid.n", n >= 3 && n <= 1024, "n must lie in [3, 1024]");
  const double length = num("grid.length", 1.0);
  check("grid.length", length > 0.0, "length must be positive");
  const Grid grid(static_cast<int>(n), length);
  if (has("grid.refine")) {
    for (const auto& part : detail::split(entry("grid.refine").value, ',')) {
      const detail::Entry e{detail::trim(part), line_of("grid.refine")};
      const long long m = detail::parse_number<long long>("refine", e);
      check("grid.refine", m >= 3 && m <= 1024, "refine sizes must lie in [3, 1024]");
      cfg.refine.push_back(static_cast<int>(m));
    }
  }

  // [problem]
  const std::string mode = has("problem.mode") ? entry("problem.mode").value : "general";
  check("problem.mode", mode == "general" || mode == "P_r", "mode must be general or P_r");
  const long long eps = integer("problem.epsilon", 1);
  check("problem.epsilon", eps == 1 || eps == -1, "epsilon must be 1 or -1");
  const long long eta = integer("problem.eta", 1);
  check("problem.eta", eta == 1 || eta == -1, "eta must be 1 or -1");
  const double p = num("problem.p", 3.0);
  check("problem.p", p > 1.0 && p < 5.0, "p must lie in (1, 5)");
  const double q = num("problem.q", 0.05);
  check("problem.q", q >= 0.0, "q must be >= 0");
  const double r = num("problem.r", 3.0);
  check("problem.r", r > 1.0, "r must be > 1");
  std::optional<double> T;
  if (has("problem.trunc_T")) {
    T = num("problem.trunc_T", 0.0);
    check("problem.trunc_T", *T > 0.0, "trunc_T must be positive");
  }
  if (mode == "P_r") {
    check("problem.q", q > 0.0, "P_r mode needs q > 0");
    if (has("problem.epsilon")) check("problem.epsilon", eps == -1, "P_r mode fixes epsilon = -1");
    if (has("problem.eta")) check("problem.eta", eta == -1, "P_r mode fixes eta = -1");
    if (has("problem.nonlinearity")) {
      check("problem.nonlinearity", entry("problem.nonlinearity").value == "power", "P_r mode uses nonlinearity = power");
    }
    check("problem.trunc_T", !T, "truncation is not used in P_r mode");
    cfg.problem = ProblemSpec::p_r_mode(grid, p, q, r);
  } else {
    const std::string nl = has("problem.nonlinearity") ? entry("problem.nonlinearity").value : "critical";
    Nonlinearity f = Nonlinearity::critical();
    if (nl == "linear") f = Nonlinearity::linear();
    else if (nl == "power") f = Nonlinearity::power(r);
    else check("problem.nonlinearity", nl == "critical", "nonlinearity must be linear, critical or power");
    if (nl == "power") check("problem.r", r < 5.0, "power nonlinearity needs r < 5 in general mode");
    cfg.problem = ProblemSpec::general_mode(grid, static_cast<int>(eps), static_cast<int>(eta), p, q, f, T);
  }

  // [solver]
  SolverConfig& s = cfg.solver;
  if (has("solver.method")) {
    try {
      s.method = method_from_string(entry("solver.method").value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("method", line_of("solver.method"), e.what());
    }
  }
  s.residual_tol = num("solver.tol", s.residual_tol);
  check("solver.tol", s.residual_tol > 0.0, "tol must be positive");
  const long long max_iter = integer("solver.max_iter", s.max_outer_iters);
  check("solver.max_iter", max_iter >= 1 && max_iter <= 100000000, "max_iter must be >= 1");
  s.max_outer_iters = static_cast<int>(max_iter);
  const long long pp = integer("solver.path_points", s.path_points);
  check("solver.path_points", pp >= 8 && pp <= 100000, "path_points must be >= 8");
  s.path_points = static_cast<int>(pp);
  if (has("solver.seed")) {
    s.seed = detail::parse_number<std::uint64_t>("seed", entry("solver.seed"));
  }
  const long long starts = integer("solver.starts", 0);
  check("solver.starts", starts >= 0 && starts <= 100000, "starts must be >= 0");
  cfg.starts = static_cast<int>(starts);
  s.cluster_tol = num("solver.cluster_tol", s.cluster_tol);
  check("solver.cluster_tol", s.cluster_tol > 0.0, "cluster_tol must be positive");
  s.descent_step = num("solver.descent_step", s.descent_step);
  check("solver.descent_step", s.descent_step > 0.0, "descent_step must be positive");
  s.endpoint_scale_start = num("solver.endpoint_scale", s.endpoint_scale_start);
  check("solver.endpoint_scale", s.endpoint_scale_start > 0.0, "endpoint_scale must be positive");
  s.init_amplitude = num("solver.init_amplitude", s.init_amplitude);
  check("solver.init_amplitude", s.init_amplitude > 0.0, "init_amplitude must be positive");
  s.warm_tol = num("solver.warm_tol", s.warm_tol);
  check("solver.warm_tol", s.warm_tol > 0.0, "warm_tol must be positive");
  if (has("solver.start")) {
    const std::string v = entry("solver.start").value;
    check("solver.start", v == "eigenfunction" || v == "bump", "start must be eigenfunction or bump");
    s.start = v == "bump" ? StartShape::bump : StartShape::eigenfunction;
  }
  if (has("solver.inner")) {
    const std::string v = entry("solver.inner").value;
    check("solver.inner", v == "minres" || v == "cg", "inner must be minres or cg");
    s.inner = v == "cg" ? InnerSolver::cg : InnerSolver::minres;
  }
  s.inner_tol = num("solver.inner_tol", s.inner_tol);
  check("solver.inner_tol", s.inner_tol > 0.0 && s.inner_tol < 1.0, "inner_tol must lie in (0, 1)");
  const long long nmax = integer("solver.newton_max_iters", s.newton_max_iters);
  check("solver.newton_max_iters", nmax >= 1 && nmax <= 100000, "newton_max_iters must be >= 1");
  s.newton_max_iters = static_cast<int>(nmax);
  s.poisson_tol = num("solver.poisson_tol", s.poisson_tol);
  check("solver.poisson_tol", s.poisson_tol > 0.0 && s.poisson_tol < 1.0, "poisson_tol must lie in (0, 1)");
  const long long threads = integer("solver.threads", s.threads);
  check("solver.threads", threads >= 1 && threads <= 1024, "threads must lie in [1, 1024]");
  s.threads = static_cast<int>(threads);
  s.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace spbvp::io
