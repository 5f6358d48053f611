#include <spbvp/cli.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

// SPBVP_THREADS caps concurrent sweep rows; unset means hardware concurrency.
int sweep_threads() {
  const char* env = std::getenv("SPBVP_THREADS");
  if (!env || !*env) return std::max(1u, std::thread::hardware_concurrency());
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096) throw spbvp::cli::UsageError("SPBVP_THREADS must be a positive integer");
  return static_cast<int>(v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Schrodinger-Poisson variational solver"};
  app.require_subcommand(1);

  std::string config, out_dir = ".";
  auto* solve = app.add_subcommand("solve", "solve the configured problem");
  solve->add_option("-c,--config", config, "INI configuration")->required();
  solve->add_option("-o,--out", out_dir, "output directory");

  double qmin = 0.0, qmax = 0.0;
  int steps = 0;
  auto* sweep = app.add_subcommand("sweep", "solve over a geometric grid of q");
  sweep->add_option("-c,--config", config, "INI configuration")->required();
  sweep->add_option("-o,--out", out_dir, "output directory");
  sweep->add_option("--qmin", qmin, "smallest q")->required();
  sweep->add_option("--qmax", qmax, "largest q")->required();
  sweep->add_option("--steps", steps, "number of q values (>= 2)")->required();

  int samples = 100;
  std::optional<std::uint64_t> seed;
  bool corrupt = false;
  auto* verify = app.add_subcommand("verify", "check identities and estimates on random fields");
  verify->add_option("-c,--config", config, "INI configuration")->required();
  verify->add_option("-o,--out", out_dir, "output directory");
  verify->add_option("--samples", samples, "number of random fields");
  verify->add_option("--seed", seed, "seed (defaults to solver.seed)");
  verify->add_flag("--corrupt-phi", corrupt, "perturb the potential; the check must then fail");

  std::vector<std::string> fields;
  int random = 0;
  auto* poh = app.add_subcommand("pohozaev", "Pohozaev residual on fields, random samples or solutions");
  poh->add_option("-c,--config", config, "INI configuration (P_r mode)")->required();
  poh->add_option("-o,--out", out_dir, "output directory");
  poh->add_option("--fields", fields, "u file and optionally phi file")->expected(1, 2);
  poh->add_option("--random", random, "number of random fields with Phi = Phi_u");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? spbvp::cli::ok : spbvp::cli::error;
  }

  try {
    if (*solve) return spbvp::cli::cmd_solve(config, out_dir, std::cout, std::cerr);
    if (*sweep) return spbvp::cli::cmd_sweep(config, qmin, qmax, steps, out_dir, sweep_threads(), std::cout, std::cerr);
    if (*verify) return spbvp::cli::cmd_verify(config, samples, seed, out_dir, corrupt, std::cout, std::cerr);
    if (*poh) return spbvp::cli::cmd_pohozaev(config, fields, out_dir, random, std::cout, std::cerr);
  } catch (const spbvp::cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return spbvp::cli::error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return spbvp::cli::error;
  }
  return spbvp::cli::error;
}
