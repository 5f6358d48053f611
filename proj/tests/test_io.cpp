#include <spbvp/io.hpp>

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace spbvp;
using spbvp::testkit::Rng;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("spbvp_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

io::FieldErrorKind read_error(const std::string& path) {
  try {
    io::read_field(path);
  } catch (const io::FieldError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error reading " << path;
  return io::FieldErrorKind::io_failure;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

int config_error_line(const std::string& text, std::string* key = nullptr) {
  try {
    io::parse_config(text);
  } catch (const io::ConfigError& e) {
    if (key) *key = e.key();
    return e.line();
  }
  return -1;
}

const char* full_config = R"(# existence run
[problem]
mode = general
epsilon = 1
eta = 1
p = 3
q = 0.05
nonlinearity = critical
trunc_T = 10

[grid]
n = 21
length = 12
refine = 15, 31

[solver]
method = mp_then_newton
tol = 1e-6   ; H^-1 residual
max_iter = 5000
path_points = 17
seed = 42
starts = 3
cluster_tol = 1e-3
)";

}  // namespace

TEST(FieldFile, RoundTripIsBitExactOnRandomFields) {
  TempDir dir;
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Grid g(3 + trial % 6, rng.uniform(0.5, 20.0));
    GridFunction u = testkit::random_field(g, rng, std::pow(10.0, rng.uniform(-30.0, 30.0)));
    if (trial == 0) u[0] = -0.0;
    if (trial == 1) u[1] = std::numeric_limits<double>::denorm_min();
    const std::string path = dir.file("f" + std::to_string(trial) + ".spfd");
    io::write_field(path, u);
    const GridFunction back = io::read_field(path);
    ASSERT_TRUE(back.grid() == g);
    EXPECT_TRUE(same_bits(back.grid().edge_length(), g.edge_length()));
    for (std::size_t i = 0; i < u.size(); ++i) ASSERT_TRUE(same_bits(back[i], u[i])) << trial << " " << i;
  }
}

TEST(FieldFile, ByteLayoutIsLittleEndian) {
  const Grid g(3, 2.0);
  GridFunction u(g);
  u[0] = 1.0;
  const std::string bytes = io::encode_field(u);
  ASSERT_EQ(bytes.size(), 6u + 12u + 8u + 27u * 8u);
  EXPECT_EQ(bytes.substr(0, 6), "SPFD01");
  for (int d = 0; d < 3; ++d) {
    EXPECT_EQ(static_cast<unsigned char>(bytes[6 + 4 * d]), 3u);
    EXPECT_EQ(bytes[7 + 4 * d], 0);
  }
  // 2.0 = 0x4000000000000000, 1.0 = 0x3FF0000000000000
  EXPECT_EQ(static_cast<unsigned char>(bytes[25]), 0x40u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[26 + 7]), 0x3Fu);
  EXPECT_EQ(static_cast<unsigned char>(bytes[26 + 6]), 0xF0u);
}

TEST(FieldFile, DistinctErrorKinds) {
  TempDir dir;
  const Grid g(4, 1.0);
  Rng rng(32);
  const std::string good = io::encode_field(testkit::random_field(g, rng));

  std::string bad = good;
  bad.replace(0, 6, "XXXXXX");
  dump(dir.file("magic.spfd"), bad);
  EXPECT_EQ(read_error(dir.file("magic.spfd")), io::FieldErrorKind::bad_magic);

  dump(dir.file("short.spfd"), good.substr(0, good.size() - 8));
  EXPECT_EQ(read_error(dir.file("short.spfd")), io::FieldErrorKind::truncated_payload);

  dump(dir.file("header.spfd"), good.substr(0, 10));
  EXPECT_EQ(read_error(dir.file("header.spfd")), io::FieldErrorKind::truncated_payload);

  std::string dims = good;
  dims[10] = 5;
  dump(dir.file("dims.spfd"), dims);
  EXPECT_EQ(read_error(dir.file("dims.spfd")), io::FieldErrorKind::dims_mismatch);

  dump(dir.file("long.spfd"), good + std::string(8, '\0'));
  EXPECT_EQ(read_error(dir.file("long.spfd")), io::FieldErrorKind::dims_mismatch);

  dump(dir.file("ok.spfd"), good);
  EXPECT_NO_THROW(io::read_field(dir.file("ok.spfd"), g));
  try {
    io::read_field(dir.file("ok.spfd"), Grid(5, 1.0));
    FAIL();
  } catch (const io::FieldError& e) {
    EXPECT_EQ(e.kind(), io::FieldErrorKind::dims_mismatch);
  }

  EXPECT_EQ(read_error(dir.file("missing.spfd")), io::FieldErrorKind::io_failure);
  try {
    io::write_field(dir.file("no/such/dir/x.spfd"), GridFunction(g));
    FAIL();
  } catch (const io::FieldError& e) {
    EXPECT_EQ(e.kind(), io::FieldErrorKind::io_failure);
  }
}

TEST(ReportCsv, HeaderOnlyAndOneRow) {
  TempDir dir;
  io::write_report_csv(dir.file("empty.csv"), {});
  EXPECT_EQ(slurp(dir.file("empty.csv")), std::string(io::csv_header) + "\n");

  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 3.0, 1.0, 3.0);
  const SolveReport rep = run_solver(spec, SolverConfig{});
  io::write_report_csv(dir.file("one.csv"), {io::make_row(rep, spec, Method::mp_then_newton)});
  const std::string text = slurp(dir.file("one.csv"));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(text.rfind(io::csv_header, 0), 0u);
}

TEST(ReportCsv, ParseBackReproducesNumbers) {
  TempDir dir;
  std::vector<io::ReportRow> rows;
  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 3.0, 1.0, 3.0);
  const SolveReport rep = run_solver(spec, SolverConfig{});
  rows.push_back(io::make_row(rep, spec, Method::mp_then_newton));
  const auto gspec = ProblemSpec::general_mode(Grid(7, 12.0), 1, 1, 3.0, 0.05, Nonlinearity::critical(), 10.0);
  rows.push_back(io::make_failed_row(gspec, Method::mountain_pass));
  Rng rng(33);
  io::ReportRow odd;
  odd.mode = "general";
  odd.method = "descent";
  odd.q = 0.1 + 0.2;
  odd.energy = -rng.uniform() * 1e-300;
  odd.residual = std::numeric_limits<double>::infinity();
  odd.trunc_active = true;
  odd.iters = 12345;
  rows.push_back(odd);

  io::write_report_csv(dir.file("r.csv"), rows);
  const auto back = io::read_report_csv(dir.file("r.csv"));
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rows[i];
    const auto& b = back[i];
    EXPECT_EQ(a.mode, b.mode);
    EXPECT_EQ(a.method, b.method);
    EXPECT_EQ(a.iters, b.iters);
    EXPECT_EQ(a.trunc_active, b.trunc_active);
    for (auto [x, y] : {std::pair{a.q, b.q}, {a.p, b.p}, {a.r, b.r}, {a.energy, b.energy}, {a.residual, b.residual},
                        {a.mp_level, b.mp_level}, {a.svista_res, b.svista_res}, {a.pohozaev_res, b.pohozaev_res},
                        {a.ne1_res, b.ne1_res}, {a.ne2_res, b.ne2_res}, {a.norm_h10, b.norm_h10},
                        {a.norm_lp1, b.norm_lp1}}) {
      if (std::isnan(x)) {
        EXPECT_TRUE(std::isnan(y)) << i;
      } else {
        EXPECT_TRUE(same_bits(x, y)) << i << ": " << x << " vs " << y;
      }
    }
  }
  // Row contents: general-mode rows have no P_r diagnostics.
  EXPECT_TRUE(std::isnan(back[1].pohozaev_res));
  EXPECT_FALSE(std::isnan(back[0].pohozaev_res));
  EXPECT_EQ(back[0].mode, "P_r");
  EXPECT_LE(back[0].svista_res, 1e-8);
}

TEST(ReportCsv, IdenticalRunsGiveIdenticalBytes) {
  TempDir dir;
  const auto spec = ProblemSpec::p_r_mode(Grid(7, 1.0), 3.0, 1.0, 3.0);
  SolverConfig cfg;
  cfg.seed = 99;
  for (const char* name : {"a.csv", "b.csv"}) {
    std::vector<io::ReportRow> rows;
    for (const auto& c : multi_start(spec, cfg, 2)) rows.push_back(io::make_row(c, spec, cfg.method));
    io::write_report_csv(dir.file(name), rows);
  }
  EXPECT_EQ(slurp(dir.file("a.csv")), slurp(dir.file("b.csv")));
}

TEST(Config, FullFileParses) {
  const io::RunConfig cfg = io::parse_config(full_config);
  EXPECT_EQ(cfg.problem.mode, Mode::general);
  EXPECT_EQ(cfg.problem.grid.n_per_axis(), 21);
  EXPECT_EQ(cfg.problem.grid.edge_length(), 12.0);
  EXPECT_EQ(cfg.problem.q, 0.05);
  ASSERT_TRUE(cfg.problem.truncation_T.has_value());
  EXPECT_EQ(*cfg.problem.truncation_T, 10.0);
  EXPECT_EQ(cfg.problem.nonlinearity.kind(), NonlinearityKind::critical);
  EXPECT_EQ(cfg.solver.method, Method::mp_then_newton);
  EXPECT_EQ(cfg.solver.residual_tol, 1e-6);
  EXPECT_EQ(cfg.solver.max_outer_iters, 5000);
  EXPECT_EQ(cfg.solver.path_points, 17);
  EXPECT_EQ(cfg.solver.seed, 42u);
  EXPECT_EQ(cfg.starts, 3);
  EXPECT_EQ(cfg.refine, (std::vector<int>{15, 31}));
}

TEST(Config, PrModeAndDefaults) {
  const io::RunConfig cfg = io::parse_config("[problem]\nmode = P_r\np = 3\nq = 1\nr = 5\n[solver]\nmethod = descent\n");
  EXPECT_EQ(cfg.problem.mode, Mode::p_r);
  EXPECT_EQ(cfg.problem.epsilon, -1);
  EXPECT_EQ(cfg.problem.r, 5.0);
  EXPECT_EQ(cfg.solver.method, Method::descent);
  EXPECT_EQ(cfg.problem.grid.n_per_axis(), 15);
  EXPECT_EQ(cfg.starts, 0);
  const io::RunConfig empty = io::parse_config("");
  EXPECT_EQ(empty.problem.mode, Mode::general);
}

TEST(Config, DiagnosticsNameKeyAndLine) {
  struct Case {
    std::string text;
    std::string key;
    int line;
  };
  const std::vector<Case> cases = {
      {"[problem]\nq = 1\nbogus = 2\n", "bogus", 3},
      {"[problem]\np = three\n", "p", 2},
      {"[problem]\np = 7\n", "p", 2},
      {"[grid]\nn = 2\n", "n", 2},
      {"[grid]\nn = 9\nn = 11\n", "n", 3},
      {"q = 1\n", "q", 1},
      {"[physics]\n", "physics", 1},
      {"[problem\n", "", 1},
      {"[problem]\njust words\n", "just words", 2},
      {"[problem]\nq =\n", "q", 2},
      {"[problem]\nmode = P_r\nepsilon = 1\n", "epsilon", 3},
      {"[problem]\nmode = P_r\nnonlinearity = critical\n", "nonlinearity", 3},
      {"[problem]\nnonlinearity = cubic\n", "nonlinearity", 2},
      {"[solver]\nmethod = simplex\n", "method", 2},
      {"[solver]\n\npath_points = 4\n", "path_points", 3},
      {"[solver]\ntol = -1\n", "tol", 2},
      {"[solver]\nseed = -3\n", "seed", 2},
      {"[grid]\nrefine = 15, x\n", "refine", 2},
      {"[problem]\nq = nan\n", "q", 2},
  };
  for (const auto& c : cases) {
    std::string key;
    EXPECT_EQ(config_error_line(c.text, &key), c.line) << c.text;
    EXPECT_EQ(key, c.key) << c.text;
  }
}

TEST(Config, ParsingIsTotalUnderMutation) {
  // Random single-character edits either parse or raise ConfigError.
  Rng rng(34);
  const std::string base = full_config;
  const std::string alphabet = "=[]#;-.,eE0123456789 \nabcxyz_";
  int errors = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text = base;
    const int edits = 1 + trial % 3;
    for (int e = 0; e < edits; ++e) {
      const auto pos = static_cast<std::size_t>(rng.uniform() * text.size());
      const char c = alphabet[static_cast<std::size_t>(rng.uniform() * alphabet.size())];
      if (rng.uniform() < 0.5) text[pos] = c;
      else text.insert(pos, 1, c);
    }
    try {
      io::parse_config(text);
    } catch (const io::ConfigError& e) {
      ++errors;
      EXPECT_GE(e.line(), 0);
    } catch (const std::exception& e) {
      ADD_FAILURE() << "non-config exception '" << e.what() << "' for\n" << text;
    }
  }
  EXPECT_GT(errors, 100);
}

TEST(Config, LoadMissingFileFails) {
  EXPECT_THROW(io::load_config("/nonexistent/spbvp.ini"), std::runtime_error);
}
