// End-to-end tests of the installed command-line tool. Each test drives the real
// binary (path injected at build time) through std::system and inspects its exit
// code and output files.

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* cli_path() { return GIRSANOV_CLI_PATH; }

int run_raw(const std::string& command) {
  const int status = std::system(command.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Runs the tool with the given arguments, output suppressed.
int run_cli(const std::string& args) {
  return run_raw(std::string(cli_path()) + " " + args + " > /dev/null 2>&1");
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "cannot open " << path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json slurp_json(const fs::path& path) { return json::parse(slurp(path)); }

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "girsanov_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int count_lines(const std::string& text) {
  int n = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("estimate --n 10") == 2);                     // no seed
  CHECK(run_cli("estimate --seed -3 --n 10") == 2);           // negative seed
  CHECK(run_cli("optimize --seed 1 --method bogus") == 2);    // unknown method
  CHECK(run_cli("estimate --seed 1 --problem no-such") == 2);  // unknown problem
  CHECK(run_cli("sweep --seed 1 --b-grid abc") == 2);          // malformed grid
  CHECK(run_cli("verify --seed 1 --suite formulas --b-grid 1:0:-1") == 2);
  CHECK(run_cli("--seed 1") == 2);  // missing subcommand
}

TEST_CASE("help exits cleanly") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("estimate --help") == 0);
}

TEST_CASE("estimate writes its report files and is deterministic") {
  // A nonzero control makes the objective statistic nondegenerate (the builtin
  // problem carries no costs, so at a = 0 it is exactly zero on every record).
  const std::string base =
      "estimate --problem brownian-exit --b 1.0 --a 1.0 --seed 42 --n 400 --dump-paths";

  const fs::path dir1 = fresh_dir("est1");
  REQUIRE(run_cli(base + " --out-dir " + dir1.string()) == 0);
  for (const char* name :
       {"phi.json", "gradient.json", "hessian.json", "kl.json", "free_energy.json"}) {
    CAPTURE(name);
    CHECK(fs::exists(dir1 / name));
  }

  const json phi = slurp_json(dir1 / "phi.json");
  CHECK(phi.at("n_samples").get<long long>() == 400);
  CHECK(std::isfinite(phi.at("mean").get<double>()));
  CHECK(phi.at("std_error").get<double>() > 0.0);
  CHECK(phi.at("lambda").get<double>() == 2.0);
  CHECK(phi.at("a").size() == 1);

  const json grad = slurp_json(dir1 / "gradient.json");
  CHECK(grad.at("values").size() == 1);
  CHECK(grad.at("std_errors").size() == 1);

  const json hess = slurp_json(dir1 / "hessian.json");
  CHECK(hess.at("values").size() == 1);
  CHECK(hess.at("values")[0].size() == 1);

  const json kl = slurp_json(dir1 / "kl.json");
  CHECK(kl.at("covariation_form").at("mean").is_number());
  CHECK(kl.at("martingale_form").at("mean").is_number());

  // The free energy is a lower bound for the objective at the zero control.
  const json fe = slurp_json(dir1 / "free_energy.json");
  const double slack = 3.0 * (phi.at("std_error").get<double>() +
                              fe.at("std_error").get<double>());
  CHECK(fe.at("mean").get<double>() <= phi.at("mean").get<double>() + slack);

  const std::string paths = slurp(dir1 / "paths.csv");
  CHECK(paths.rfind("tau,censored,phi,m_0", 0) == 0);
  CHECK(count_lines(paths) == 401);  // header + one row per trajectory

  SUBCASE("rerun with the same seed is byte-identical") {
    const fs::path dir2 = fresh_dir("est2");
    REQUIRE(run_cli(base + " --out-dir " + dir2.string()) == 0);
    for (const char* name : {"phi.json", "gradient.json", "hessian.json", "kl.json",
                             "free_energy.json", "paths.csv"}) {
      CAPTURE(name);
      CHECK(slurp(dir1 / name) == slurp(dir2 / name));
    }
  }
  SUBCASE("worker count does not change any output byte") {
    const fs::path dir4 = fresh_dir("est4");
    REQUIRE(run_cli(base + " --threads 4 --out-dir " + dir4.string()) == 0);
    for (const char* name : {"phi.json", "gradient.json", "hessian.json", "kl.json",
                             "free_energy.json", "paths.csv"}) {
      CAPTURE(name);
      CHECK(slurp(dir1 / name) == slurp(dir4 / name));
    }
  }
  SUBCASE("thread count from the environment is equivalent") {
    const fs::path dir_env = fresh_dir("est_env");
    const int rc = run_raw("GIRSANOV_GRAD_THREADS=3 " + std::string(cli_path()) + " " +
                           base + " --out-dir " + dir_env.string() +
                           " > /dev/null 2>&1");
    REQUIRE(rc == 0);
    CHECK(slurp(dir1 / "phi.json") == slurp(dir_env / "phi.json"));
  }
}

TEST_CASE("config file supplies defaults and flags override it") {
  const fs::path dir_cfg = fresh_dir("cfg");
  const fs::path cfg = dir_cfg / "run.json";
  {
    std::ofstream out(cfg);
    out << R"({"seed": 11, "n": 200, "b": 0.5, "dt": 0.002, "a": [0.7]})";
  }

  // Flag --seed must beat the config's seed; everything else comes from the config.
  const fs::path dir_a = fresh_dir("cfg_a");
  REQUIRE(run_cli("estimate --config " + cfg.string() + " --seed 9 --out-dir " +
                  dir_a.string()) == 0);

  const fs::path dir_b = fresh_dir("cfg_b");
  REQUIRE(run_cli("estimate --seed 9 --n 200 --b 0.5 --dt 0.002 --a 0.7 --out-dir " +
                  dir_b.string()) == 0);

  CHECK(slurp(dir_a / "phi.json") == slurp(dir_b / "phi.json"));
  CHECK(slurp(dir_a / "gradient.json") == slurp(dir_b / "gradient.json"));

  // Config alone (its own seed) must also run.
  const fs::path dir_c = fresh_dir("cfg_c");
  REQUIRE(run_cli("estimate --config " + cfg.string() + " --out-dir " +
                  dir_c.string()) == 0);
  const json phi_c = slurp_json(dir_c / "phi.json");
  CHECK(phi_c.at("n_samples").get<long long>() == 200);

  // A different seed must actually change the numbers.
  CHECK(slurp(dir_a / "phi.json") != slurp(dir_c / "phi.json"));
}

TEST_CASE("optimize writes a trace and a final report") {
  const fs::path dir = fresh_dir("opt");
  REQUIRE(run_cli("optimize --problem brownian-exit --b 1.0 --seed 7 --n 300 "
                  "--method gd --a0 0.2 --max-iter 3 --grad-tol 1e-9 --out-dir " +
                  dir.string()) == 0);
  CHECK(fs::exists(dir / "trace.csv"));
  CHECK(fs::exists(dir / "trace.json"));

  const std::string csv = slurp(dir / "trace.csv");
  CHECK(csv.rfind("iter,a_0,phi_mean,phi_se,grad_norm,step", 0) == 0);

  const json fin = slurp_json(dir / "final.json");
  CHECK(fin.at("method").get<std::string>() == "gd");
  CHECK(fin.at("a").size() == 1);
  CHECK(fin.at("termination").is_string());
  const json trace = slurp_json(dir / "trace.json");
  CHECK(trace.at("iterates").size() ==
        fin.at("iterations").get<std::size_t>() + 1);

  SUBCASE("newton runs through the same front end") {
    const fs::path dir_n = fresh_dir("opt_newton");
    REQUIRE(run_cli("optimize --problem brownian-exit --b 1.0 --seed 7 --n 300 "
                    "--method newton --a0 0.2 --max-iter 2 --grad-tol 1e-9 "
                    "--out-dir " +
                    dir_n.string()) == 0);
    const json fin_n = slurp_json(dir_n / "final.json");
    CHECK(fin_n.at("method").get<std::string>() == "newton");
  }
}

TEST_CASE("verify runs a suite, reports rows, and gates its exit code") {
  const fs::path dir = fresh_dir("verify");
  const fs::path log = dir / "stdout.txt";
  const int rc = run_raw(std::string(cli_path()) +
                         " verify --suite formulas --seed 3 --out-dir " + dir.string() +
                         " > " + log.string() + " 2>&1");
  CHECK(rc == 0);

  const json report = slurp_json(dir / "verify_report.json");
  CHECK(report.at("all_pass").get<bool>());
  CHECK(report.at("checks").size() == 11);

  const std::string out = slurp(log);
  CHECK(out.find("[pass]") != std::string::npos);
  CHECK(out.find("[FAIL]") == std::string::npos);

  SUBCASE("unknown suite name is a usage error") {
    CHECK(run_cli("verify --suite bogus --seed 3 --out-dir " + dir.string()) == 2);
  }
  SUBCASE("a b-grid adds the sweep CSV") {
    const fs::path dir_g = fresh_dir("verify_grid");
    REQUIRE(run_cli("verify --suite formulas --seed 3 --n 200 --dt 0.002 "
                    "--b-grid 0.5:1.0:0.5 --out-dir " +
                    dir_g.string()) == 0);
    const std::string csv = slurp(dir_g / "q_sweep.csv");
    CHECK(csv.rfind("b,estimate,std_error,oracle", 0) == 0);
    CHECK(count_lines(csv) == 3);  // header + two grid points
  }
}

TEST_CASE("sweep writes one row per grid point") {
  const fs::path dir = fresh_dir("sweep");
  REQUIRE(run_cli("sweep --seed 5 --n 200 --dt 0.002 --b-grid 0.5:1.0:0.5 "
                  "--out-dir " +
                  dir.string()) == 0);
  const std::string csv = slurp(dir / "sweep.csv");
  CHECK(csv.rfind("b,estimate,std_error,oracle", 0) == 0);
  CHECK(count_lines(csv) == 3);

  SUBCASE("sweeps are deterministic too") {
    const fs::path dir2 = fresh_dir("sweep2");
    REQUIRE(run_cli("sweep --seed 5 --n 200 --dt 0.002 --b-grid 0.5:1.0:0.5 "
                    "--threads 4 --out-dir " +
                    dir2.string()) == 0);
    CHECK(slurp(dir / "sweep.csv") == slurp(dir2 / "sweep.csv"));
  }
}
