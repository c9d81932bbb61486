#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "girsanov/estimate.hpp"
#include "girsanov/model.hpp"
#include "girsanov/simulate.hpp"

namespace girsanov {

/// Exact exit law of standard Brownian motion started at 0 on (-2, b).
struct ExitLaw {
  double p_left = 0.0;   // exit at -2: b / (2 + b)
  double p_right = 0.0;  // exit at b:  2 / (2 + b)
  double b = 0.0;
};

ExitLaw exit_law_oracle(double b);

/// Closed form 2 b (b^2 + 2 b - 2) of the second-derivative statistic
/// E[B^4 + 4 B^3 + 2 B^2] under the exit law on (-2, b); negative exactly on
/// (0, sqrt(3) - 1), which is the nonconvexity witness.
double q_polynomial(double b);

struct NonconvexityResult {
  McEstimate estimate;
  double oracle = 0.0;
};

/// Deterministic-horizon variant of the brownian-exit problem (domain widened so the
/// box is never hit, horizon_is_exit on, t_max = 1): covariation gram = t_max on every
/// path, so the objective estimate is exactly quadratic in the control coefficient and
/// finite differences of it carry no Monte Carlo noise under a shared seed.
ProblemSpec make_fixed_horizon_drift();

/// Deterministic-horizon double-well instance used for finite-difference validation of
/// the gradient statistic: smooth bump basis, quadratic terminal cost, t_max = 2,
/// domain wide enough that paths never leave it. At a deterministic horizon the
/// gradient statistic is the exact derivative of the discretized objective, so a
/// central difference under common random numbers must reproduce it to a few percent.
ProblemSpec make_fixed_horizon_double_well();

/// Estimates E[B^4 + 4 B^3 + 2 B^2] on the brownian-exit problem at u = 1 (the scalar
/// second-derivative statistic of the entropic objective) and returns it with
/// q_polynomial(b) for comparison.
NonconvexityResult reproduce_nonconvexity(double b, std::int64_t n, double dt,
                                          std::uint64_t seed, bool bridge,
                                          int threads = 0);

/// Residual of the exact reweighting-exponent identity
/// -log exponential_martingale(rec, -a) = a.m + 0.5 a.gram.a; must be below
/// 1e-10 (1 + |a.m|) for every record.
double pathwise_identity_check(const TrajectoryRecord& rec, const CoeffVector& a);

struct FdCheckDetail {
  double fd_value = 0.0;
  double grad_value = 0.0;
  double relative_error = 0.0;
};

/// Central-difference probe of the gradient statistic along `direction`: compares
/// direction . gradient-estimate at a against (phi-estimate(a + h dir) -
/// phi-estimate(a - h dir)) / (2h), all three runs under the same seed (common random
/// numbers). Returns |difference| / max(|fd|, |grad|).
double finite_difference_check(const ProblemSpec& spec, const CoeffVector& a,
                               const CoeffVector& direction, double h, std::int64_t n,
                               std::uint64_t seed, FdCheckDetail* detail = nullptr,
                               int threads = 0);

/// Pathwise inequality sweep over a record set:
///   Cauchy-Schwarz for the covariation: gram[k][l]^2 <= gram[k][k] gram[l][l];
///   covariation growth bound: |gram[k][l]| <= alpha^-2 bound_k bound_l tau, and the
///   combined a .gram. a <= alpha^-2 (sum_k |a_k| bound_k)^2 tau.
/// Slack is rhs - lhs (worst over records); a tiny relative rounding allowance is
/// applied before counting a violation.
struct BoundReport {
  std::int64_t n_records = 0;
  std::int64_t cauchy_schwarz_violations = 0;
  std::int64_t growth_violations = 0;
  double worst_cauchy_schwarz_slack = 0.0;
  double worst_growth_slack = 0.0;
  bool pass = false;
};

BoundReport bound_checks(const std::vector<TrajectoryRecord>& records,
                         const ProblemSpec& spec, const CoeffVector& a);

/// Same estimate at dt and dt/2 under one seed; their gap is a Richardson-style
/// discretization-bias probe used to justify tolerance budgets.
struct DtHalvingProbe {
  McEstimate value_dt;
  McEstimate value_half_dt;
  double bias_estimate = 0.0;
};

DtHalvingProbe dt_halving_probe(const ProblemSpec& spec, const CoeffVector& a,
                                std::int64_t n, std::uint64_t seed, int threads = 0);

/// One row of a verification report.
struct CheckResult {
  std::string check_name;
  double value = 0.0;
  double oracle = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Named suites: "oracles", "identities", "bounds", "fd", "formulas",
/// "discretization", "nonconvexity", or "all".
std::vector<CheckResult> run_verify_suite(const std::string& suite, std::uint64_t seed,
                                          int threads = 0);

nlohmann::json report_to_json(const std::vector<CheckResult>& results);

/// CSV rows (b, estimate, std_error, oracle) of the second-derivative statistic
/// against its closed form across a grid of right endpoints.
void write_q_sweep_csv(std::ostream& os, const std::vector<double>& b_grid,
                       std::int64_t n, double dt, std::uint64_t seed, bool bridge,
                       int threads = 0);

}  // namespace girsanov
