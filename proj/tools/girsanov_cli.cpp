// Command-line front end: estimate | optimize | verify | sweep.
//
// Every run is identified by (problem, control, n, seed); outputs are deterministic
// functions of that tuple, independent of the worker count, so reruns are
// byte-identical. JSON for structured results, CSV for anything plottable.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "girsanov/estimate.hpp"
#include "girsanov/model.hpp"
#include "girsanov/optimize.hpp"
#include "girsanov/simulate.hpp"
#include "girsanov/verify.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string problem = "brownian-exit";
  std::string config_path;
  long long seed = -1;
  bool seed_given = false;
  int threads = 0;
  std::string out_dir = ".";
  double b = 1.0;
  bool b_given = false;
  double lambda = 0.0;
  bool lambda_given = false;
  double dt = 0.0;
  bool dt_given = false;
  double t_max = 0.0;
  bool t_max_given = false;
  bool bridge = false;
  bool bridge_given = false;
};

void add_common_options(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--problem", opt.problem,
                  "Builtin problem name (brownian-exit, double-well) or path to a "
                  "problem JSON file");
  cmd->add_option("--config", opt.config_path,
                  "JSON config file; command-line flags override its values");
  cmd->add_option("--seed", opt.seed, "RNG seed (required; >= 0)");
  cmd->add_option("--threads", opt.threads,
                  "Worker threads (default: GIRSANOV_GRAD_THREADS or 1); results do "
                  "not depend on this");
  cmd->add_option("--out-dir", opt.out_dir, "Output directory (created if missing)");
  cmd->add_option("--b", opt.b, "Right endpoint for the brownian-exit problem");
  cmd->add_option("--lambda", opt.lambda, "Entropy-penalty strength override");
  cmd->add_option("--dt", opt.dt, "Time-step override");
  cmd->add_option("--t-max", opt.t_max, "Time-horizon override");
  cmd->add_flag("--bridge", opt.bridge, "Enable the intra-step exit correction");
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw girsanov::ConfigError("cannot open config file: " + path);
  json config;
  try {
    in >> config;
  } catch (const json::exception& e) {
    throw girsanov::ConfigError("cannot parse config file " + path + ": " + e.what());
  }
  if (!config.is_object())
    throw girsanov::ConfigError("config file must hold a JSON object: " + path);
  return config;
}

// Flags win over config values; config values win over defaults.
void merge_common(const CLI::App& cmd, CommonOptions& opt, json& config) {
  if (!opt.config_path.empty()) config = load_config(opt.config_path);

  auto given = [&cmd](const char* name) { return cmd.count(name) > 0; };

  if (!given("--problem") && config.contains("problem") &&
      config["problem"].is_string()) {
    opt.problem = config["problem"].get<std::string>();
  }
  if (given("--seed")) {
    opt.seed_given = true;
  } else if (config.contains("seed")) {
    opt.seed = config["seed"].get<long long>();
    opt.seed_given = true;
  }
  if (!given("--threads") && config.contains("threads"))
    opt.threads = config["threads"].get<int>();
  if (!given("--out-dir") && config.contains("out_dir"))
    opt.out_dir = config["out_dir"].get<std::string>();
  opt.b_given = given("--b") || config.contains("b");
  if (!given("--b") && config.contains("b")) opt.b = config["b"].get<double>();
  opt.lambda_given = given("--lambda") || config.contains("lambda");
  if (!given("--lambda") && config.contains("lambda"))
    opt.lambda = config["lambda"].get<double>();
  opt.dt_given = given("--dt") || config.contains("dt");
  if (!given("--dt") && config.contains("dt")) opt.dt = config["dt"].get<double>();
  opt.t_max_given = given("--t-max") || config.contains("t_max");
  if (!given("--t-max") && config.contains("t_max"))
    opt.t_max = config["t_max"].get<double>();
  opt.bridge_given = given("--bridge") || config.contains("bridge");
  if (!given("--bridge") && config.contains("bridge"))
    opt.bridge = config["bridge"].get<bool>();
}

girsanov::ProblemSpec resolve_problem(const CommonOptions& opt, const json& config) {
  girsanov::ProblemSpec spec;
  if (opt.problem == "brownian-exit") {
    spec = girsanov::make_brownian_exit(opt.b_given ? opt.b : 1.0);
  } else if (opt.problem == "double-well") {
    spec = girsanov::make_double_well();
  } else if (fs::exists(opt.problem)) {
    spec = girsanov::load_problem_file(opt.problem);
  } else if (config.contains("problem") && config["problem"].is_object()) {
    spec = girsanov::load_problem(config["problem"]);
  } else {
    throw girsanov::ConfigError("unknown problem '" + opt.problem +
                                "' (not a builtin name or readable file)");
  }
  if (opt.lambda_given) spec.lambda = opt.lambda;
  if (opt.dt_given) spec.dt = opt.dt;
  if (opt.t_max_given) spec.t_max = opt.t_max;
  if (opt.bridge_given) spec.bridge = opt.bridge;
  spec.validate();
  return spec;
}

int require_seed(const CommonOptions& opt, const std::string& cmd_name) {
  if (!opt.seed_given || opt.seed < 0) {
    std::cerr << "error: " << cmd_name
              << " requires --seed <nonnegative integer> (no silent nondeterminism)\n";
    return kExitUsage;
  }
  return kExitOk;
}

girsanov::CoeffVector to_coeffs(const std::vector<double>& values, int n_basis,
                                const char* what) {
  if (values.empty()) return girsanov::CoeffVector::Zero(n_basis);
  if (static_cast<int>(values.size()) != n_basis) {
    throw girsanov::InvalidInputError(
        std::string(what) + ": expected " + std::to_string(n_basis) +
        " coefficients, got " + std::to_string(values.size()));
  }
  girsanov::CoeffVector a(n_basis);
  for (int k = 0; k < n_basis; ++k) a(k) = values[static_cast<std::size_t>(k)];
  return a;
}

std::vector<double> parse_grid(const std::string& text) {
  // "lo:hi:step" inclusive of hi up to rounding slack.
  std::vector<double> grid;
  const auto c1 = text.find(':');
  const auto c2 = text.find(':', c1 == std::string::npos ? c1 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos) return grid;
  try {
    const double lo = std::stod(text.substr(0, c1));
    const double hi = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
    const double step = std::stod(text.substr(c2 + 1));
    if (!(step > 0.0)) return grid;
    for (double v = lo; v <= hi + 1e-12 * (1.0 + std::abs(hi)); v += step)
      grid.push_back(v);
  } catch (const std::exception&) {
    grid.clear();
  }
  return grid;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw girsanov::ConfigError("cannot write output file: " + path.string());
  out << text;
  if (!out) throw girsanov::ConfigError("write failed: " + path.string());
}

json mc_to_json(const girsanov::McEstimate& est) {
  return json{{"mean", est.mean},
              {"std_error", est.std_error},
              {"n_samples", est.n_samples},
              {"censored_fraction", est.censored_fraction}};
}

std::vector<double> vec_to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateOptions {
  CommonOptions common;
  std::vector<double> a;
  std::vector<double> w;
  long long n = 10000;
  bool dump_paths = false;
};

int cmd_estimate(const CLI::App& cmd, EstimateOptions& opt, json& config) {
  merge_common(cmd, opt.common, config);
  if (int rc = require_seed(opt.common, "estimate"); rc != kExitOk) return rc;
  if (cmd.count("--n") == 0 && config.contains("n")) opt.n = config["n"].get<long long>();
  if (opt.a.empty() && config.contains("a"))
    opt.a = config["a"].get<std::vector<double>>();
  if (opt.w.empty() && config.contains("w"))
    opt.w = config["w"].get<std::vector<double>>();

  const girsanov::ProblemSpec spec = resolve_problem(opt.common, config);
  const auto seed = static_cast<std::uint64_t>(opt.common.seed);
  const girsanov::CoeffVector a = to_coeffs(opt.a, spec.n_basis(), "--a");
  const girsanov::CoeffVector w =
      opt.w.empty() ? a : to_coeffs(opt.w, spec.n_basis(), "--w");

  const fs::path dir(opt.common.out_dir);
  fs::create_directories(dir);

  const std::vector<girsanov::TrajectoryRecord> records =
      girsanov::simulate_records(spec, a, opt.n, seed, opt.common.threads);

  const girsanov::McEstimate phi = girsanov::estimate_phi(records, spec.lambda, a);
  json phi_json = mc_to_json(phi);
  phi_json["lambda"] = spec.lambda;
  phi_json["a"] = vec_to_std(a);
  write_text_file(dir / "phi.json", phi_json.dump(2) + "\n");

  const girsanov::DerivativeEstimate grad =
      girsanov::estimate_gradient(records, spec.lambda, a);
  write_text_file(dir / "gradient.json",
                  json{{"values", vec_to_std(grad.values.col(0))},
                       {"std_errors", vec_to_std(grad.std_errors.col(0))},
                       {"a", vec_to_std(a)},
                       {"lambda", spec.lambda}}
                          .dump(2) +
                      "\n");

  const girsanov::DerivativeEstimate hess =
      girsanov::estimate_hessian(records, spec.lambda, a);
  write_text_file(dir / "hessian.json",
                  json{{"values", matrix_to_json(hess.values)},
                       {"std_errors", matrix_to_json(hess.std_errors)},
                       {"a", vec_to_std(a)},
                       {"lambda", spec.lambda}}
                          .dump(2) +
                      "\n");

  girsanov::McEstimate kl_mart;
  const girsanov::McEstimate kl = girsanov::estimate_kl(records, w, &kl_mart);
  write_text_file(dir / "kl.json",
                  json{{"covariation_form", mc_to_json(kl)},
                       {"martingale_form", mc_to_json(kl_mart)},
                       {"w", vec_to_std(w)}}
                          .dump(2) +
                      "\n");

  const girsanov::McEstimate fe =
      girsanov::estimate_free_energy(spec, spec.lambda, opt.n, seed, opt.common.threads);
  json fe_json = mc_to_json(fe);
  fe_json["lambda"] = spec.lambda;
  write_text_file(dir / "free_energy.json", fe_json.dump(2) + "\n");

  if (opt.dump_paths) {
    std::ofstream csv(dir / "paths.csv");
    if (!csv) throw girsanov::ConfigError("cannot write paths.csv");
    girsanov::write_records_csv(csv, records);
  }

  std::cout << "estimate: wrote phi/gradient/hessian/kl/free_energy JSON to "
            << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

struct OptimizeOptions {
  CommonOptions common;
  std::string method = "gd";
  std::vector<double> a0;
  long long n = 10000;
  long long max_iter = 100;
  double grad_tol = 1e-3;
  double ridge_floor = 0.0;
};

int cmd_optimize(const CLI::App& cmd, OptimizeOptions& opt, json& config) {
  merge_common(cmd, opt.common, config);
  if (int rc = require_seed(opt.common, "optimize"); rc != kExitOk) return rc;
  if (cmd.count("--method") == 0 && config.contains("method"))
    opt.method = config["method"].get<std::string>();
  if (cmd.count("--n") == 0 && config.contains("n")) opt.n = config["n"].get<long long>();
  if (cmd.count("--max-iter") == 0 && config.contains("max_iter"))
    opt.max_iter = config["max_iter"].get<long long>();
  if (cmd.count("--grad-tol") == 0 && config.contains("grad_tol"))
    opt.grad_tol = config["grad_tol"].get<double>();
  if (cmd.count("--ridge-floor") == 0 && config.contains("ridge_floor"))
    opt.ridge_floor = config["ridge_floor"].get<double>();
  if (opt.a0.empty() && config.contains("a0"))
    opt.a0 = config["a0"].get<std::vector<double>>();

  if (opt.method != "gd" && opt.method != "newton") {
    std::cerr << "error: --method must be 'gd' or 'newton', got '" << opt.method
              << "'\n";
    return kExitUsage;
  }

  const girsanov::ProblemSpec spec = resolve_problem(opt.common, config);
  const auto seed = static_cast<std::uint64_t>(opt.common.seed);
  const girsanov::CoeffVector a0 = to_coeffs(opt.a0, spec.n_basis(), "--a0");

  const girsanov::OptTrace trace =
      opt.method == "gd"
          ? girsanov::gradient_descent(spec, a0, opt.n, seed, opt.max_iter,
                                       opt.grad_tol, opt.common.threads)
          : girsanov::newton_solve(spec, a0, opt.n, seed, opt.max_iter, opt.grad_tol,
                                   opt.ridge_floor, opt.common.threads);

  const fs::path dir(opt.common.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "trace.csv");
    if (!csv) throw girsanov::ConfigError("cannot write trace.csv");
    girsanov::write_trace_csv(csv, trace);
  }
  write_text_file(dir / "trace.json", girsanov::trace_to_json(trace).dump(2) + "\n");

  json final_json;
  final_json["method"] = opt.method;
  final_json["a"] = vec_to_std(trace.iterates.back());
  final_json["phi"] = mc_to_json(trace.phi_values.back());
  final_json["grad_norm"] = trace.grad_norms.back();
  final_json["iterations"] = trace.iterates.size() - 1;
  final_json["termination"] = girsanov::to_string(trace.termination);
  write_text_file(dir / "final.json", final_json.dump(2) + "\n");

  std::cout << "optimize (" << opt.method << "): " << trace.iterates.size() - 1
            << " iterations, termination " << girsanov::to_string(trace.termination)
            << ", wrote trace.csv/trace.json/final.json to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyOptions {
  CommonOptions common;
  std::string suite = "all";
  std::string b_grid;
  long long n = 20000;
};

int cmd_verify(const CLI::App& cmd, VerifyOptions& opt, json& config) {
  merge_common(cmd, opt.common, config);
  if (int rc = require_seed(opt.common, "verify"); rc != kExitOk) return rc;
  if (cmd.count("--suite") == 0 && config.contains("suite"))
    opt.suite = config["suite"].get<std::string>();
  if (cmd.count("--b-grid") == 0 && config.contains("b_grid"))
    opt.b_grid = config["b_grid"].get<std::string>();
  if (cmd.count("--n") == 0 && config.contains("n")) opt.n = config["n"].get<long long>();

  const auto seed = static_cast<std::uint64_t>(opt.common.seed);
  const fs::path dir(opt.common.out_dir);
  fs::create_directories(dir);

  std::vector<double> grid;
  if (cmd.count("--b-grid") > 0 || !opt.b_grid.empty()) {
    grid = parse_grid(opt.b_grid);
    if (grid.empty()) {
      std::cerr << "error: --b-grid must be lo:hi:step with step > 0 and at least one "
                   "point, got '"
                << opt.b_grid << "'\n";
      return kExitUsage;
    }
  }

  const std::vector<girsanov::CheckResult> results =
      girsanov::run_verify_suite(opt.suite, seed, opt.common.threads);

  write_text_file(dir / "verify_report.json",
                  girsanov::report_to_json(results).dump(2) + "\n");

  if (!grid.empty()) {
    std::ofstream csv(dir / "q_sweep.csv");
    if (!csv) throw girsanov::ConfigError("cannot write q_sweep.csv");
    const double dt = opt.common.dt_given ? opt.common.dt : 2e-4;
    const bool bridge = opt.common.bridge_given ? opt.common.bridge : true;
    girsanov::write_q_sweep_csv(csv, grid, opt.n, dt, seed, bridge,
                                opt.common.threads);
  }

  bool all_pass = true;
  for (const girsanov::CheckResult& c : results) {
    std::cout << (c.pass ? "[pass] " : "[FAIL] ") << c.check_name << ": value "
              << c.value << ", oracle " << c.oracle << ", tolerance " << c.tolerance
              << "\n";
    all_pass = all_pass && c.pass;
  }
  std::cout << "verify suite '" << opt.suite << "': "
            << (all_pass ? "all checks passed" : "CHECKS FAILED") << " ("
            << results.size() << " checks), report in " << dir.string() << "\n";
  return all_pass ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepOptions {
  CommonOptions common;
  std::string b_grid = "0.2:1.2:0.1";
  long long n = 20000;
};

int cmd_sweep(const CLI::App& cmd, SweepOptions& opt, json& config) {
  merge_common(cmd, opt.common, config);
  if (int rc = require_seed(opt.common, "sweep"); rc != kExitOk) return rc;
  if (cmd.count("--b-grid") == 0 && config.contains("b_grid"))
    opt.b_grid = config["b_grid"].get<std::string>();
  if (cmd.count("--n") == 0 && config.contains("n")) opt.n = config["n"].get<long long>();

  const std::vector<double> grid = parse_grid(opt.b_grid);
  if (grid.empty()) {
    std::cerr << "error: --b-grid must be lo:hi:step with step > 0 and at least one "
                 "point, got '"
              << opt.b_grid << "'\n";
    return kExitUsage;
  }

  const auto seed = static_cast<std::uint64_t>(opt.common.seed);
  const fs::path dir(opt.common.out_dir);
  fs::create_directories(dir);

  const double dt = opt.common.dt_given ? opt.common.dt : 2e-4;
  const bool bridge = opt.common.bridge_given ? opt.common.bridge : true;
  std::ofstream csv(dir / "sweep.csv");
  if (!csv) throw girsanov::ConfigError("cannot write sweep.csv");
  girsanov::write_q_sweep_csv(csv, grid, opt.n, dt, seed, bridge, opt.common.threads);

  std::cout << "sweep: " << grid.size() << " grid points, wrote sweep.csv to "
            << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Monte Carlo derivative estimation and optimization for entropy-regularized "
      "first-exit control problems"};
  app.require_subcommand(1);

  EstimateOptions est_opt;
  CLI::App* est_cmd = app.add_subcommand(
      "estimate", "Estimate the objective, its derivatives, the relative-entropy "
                  "cost, and the free-energy lower bound at a fixed control");
  add_common_options(est_cmd, est_opt.common);
  est_cmd->add_option("--a", est_opt.a, "Control coefficients (default: all zero)");
  est_cmd->add_option("--w", est_opt.w,
                      "Tilt coefficients for the relative-entropy report (default: "
                      "same as --a)");
  est_cmd->add_option("--n", est_opt.n, "Number of sampled trajectories");
  est_cmd->add_flag("--dump-paths", est_opt.dump_paths,
                    "Also write per-trajectory statistics to paths.csv");

  OptimizeOptions op_opt;
  CLI::App* op_cmd = app.add_subcommand(
      "optimize", "Minimize the sample-average objective by gradient descent or "
                  "Newton's method at a fixed seed");
  add_common_options(op_cmd, op_opt.common);
  op_cmd->add_option("--method", op_opt.method, "gd or newton");
  op_cmd->add_option("--a0", op_opt.a0, "Initial coefficients (default: all zero)");
  op_cmd->add_option("--n", op_opt.n, "Samples per objective evaluation");
  op_cmd->add_option("--max-iter", op_opt.max_iter, "Iteration cap");
  op_cmd->add_option("--grad-tol", op_opt.grad_tol, "Gradient-norm stopping tolerance");
  op_cmd->add_option("--ridge-floor", op_opt.ridge_floor,
                     "Smallest allowed Hessian eigenvalue before ridging (<= 0: "
                     "automatic)");

  VerifyOptions ver_opt;
  CLI::App* ver_cmd = app.add_subcommand(
      "verify", "Run a named verification suite against closed-form oracles and "
                "pathwise identities");
  add_common_options(ver_cmd, ver_opt.common);
  ver_cmd->add_option("--suite", ver_opt.suite,
                      "formulas | identities | bounds | oracles | fd | "
                      "discretization | nonconvexity | all");
  ver_cmd->add_option("--b-grid", ver_opt.b_grid,
                      "lo:hi:step grid of right endpoints; also writes q_sweep.csv");
  ver_cmd->add_option("--n", ver_opt.n, "Samples per sweep grid point");

  SweepOptions sw_opt;
  CLI::App* sw_cmd = app.add_subcommand(
      "sweep", "Sweep the second-derivative statistic against its closed form over "
               "a grid of right endpoints");
  add_common_options(sw_cmd, sw_opt.common);
  sw_cmd->add_option("--b-grid", sw_opt.b_grid, "lo:hi:step grid of right endpoints");
  sw_cmd->add_option("--n", sw_opt.n, "Samples per grid point");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    json config;
    if (est_cmd->parsed()) return cmd_estimate(*est_cmd, est_opt, config);
    if (op_cmd->parsed()) return cmd_optimize(*op_cmd, op_opt, config);
    if (ver_cmd->parsed()) return cmd_verify(*ver_cmd, ver_opt, config);
    if (sw_cmd->parsed()) return cmd_sweep(*sw_cmd, sw_opt, config);
    std::cerr << "error: expected a subcommand (estimate | optimize | verify | sweep)\n";
    return kExitUsage;
  } catch (const girsanov::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const girsanov::InvalidInputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
