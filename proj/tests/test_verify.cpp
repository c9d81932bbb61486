#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "girsanov/estimate.hpp"
#include "girsanov/model.hpp"
#include "girsanov/simulate.hpp"
#include "girsanov/verify.hpp"

using namespace girsanov;

namespace {

CoeffVector coeff1(double v) {
  CoeffVector a(1);
  a << v;
  return a;
}

}  // namespace

TEST_CASE("exit law oracle") {
  const ExitLaw law1 = exit_law_oracle(1.0);
  CHECK(law1.p_left == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(law1.p_right == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const ExitLaw law05 = exit_law_oracle(0.5);
  CHECK(law05.p_left == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(law05.p_right == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(law05.p_left + law05.p_right == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(exit_law_oracle(0.0), InvalidInputError);
  CHECK_THROWS_AS(exit_law_oracle(-1.0), InvalidInputError);
}

TEST_CASE("closed-form second-derivative polynomial") {
  CHECK(q_polynomial(1.0) == doctest::Approx(2.0).epsilon(1e-15));
  // Root at sqrt(3) - 1; negative strictly inside (0, sqrt(3) - 1).
  CHECK(std::abs(q_polynomial(std::sqrt(3.0) - 1.0)) < 1e-12);
  CHECK(q_polynomial(0.3) < 0.0);
  CHECK(q_polynomial(0.5) < 0.0);
  CHECK(q_polynomial(0.8) > 0.0);
  CHECK(q_polynomial(1.5) > 0.0);
  CHECK(q_polynomial(0.0) == 0.0);
}

TEST_CASE("deterministic-horizon fixtures stop exactly at the horizon") {
  const ProblemSpec drift_spec = make_fixed_horizon_drift();
  CHECK(drift_spec.n_basis() == 1);
  CHECK(drift_spec.horizon_is_exit);
  const std::vector<TrajectoryRecord> recs =
      simulate_records(drift_spec, coeff1(0.3), 50, 7, 1);
  for (const TrajectoryRecord& rec : recs) {
    CHECK(!rec.censored);
    CHECK(rec.tau == doctest::Approx(drift_spec.t_max).epsilon(1e-12));
    // Quadratic-variation accumulator integrates dt over the whole horizon.
    CHECK(rec.gram(0, 0) == doctest::Approx(drift_spec.t_max).epsilon(1e-9));
    CHECK(std::isfinite(rec.m(0)));
    CHECK(rec.phi == 0.0);  // the instance carries no costs
  }

  const ProblemSpec well_spec = make_fixed_horizon_double_well();
  CHECK(well_spec.n_basis() == 3);
  CHECK(well_spec.horizon_is_exit);
  const std::vector<TrajectoryRecord> wrecs =
      simulate_records(well_spec, CoeffVector::Zero(3), 20, 7, 1);
  for (const TrajectoryRecord& rec : wrecs) {
    CHECK(!rec.censored);
    CHECK(rec.tau == doctest::Approx(well_spec.t_max).epsilon(1e-12));
  }
}

TEST_CASE("pathwise reweighting-exponent identity on simulated records") {
  const ProblemSpec spec = make_brownian_exit(1.0);
  const CoeffVector a = coeff1(0.7);
  const std::vector<TrajectoryRecord> recs = simulate_records(spec, a, 200, 3, 1);
  for (const TrajectoryRecord& rec : recs)
    CHECK(pathwise_identity_check(rec, a) < 1e-10);
}

TEST_CASE("finite differences of the exactly quadratic objective match the gradient") {
  const ProblemSpec spec = make_fixed_horizon_drift();
  FdCheckDetail detail;
  const double rel = finite_difference_check(spec, coeff1(0.5), coeff1(1.0), 1e-3,
                                             20000, 13, &detail, 2);
  CHECK(rel < 0.05);
  CHECK(rel == doctest::Approx(detail.relative_error));
  // The objective estimate is (lambda/2) a^2 t_max exactly, so the difference
  // quotient equals lambda * a * t_max = 1 up to the O(h^2)-free quadratic algebra.
  CHECK(detail.fd_value == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(detail.grad_value == doctest::Approx(1.0).epsilon(0.1));
  CHECK_THROWS_AS(finite_difference_check(spec, coeff1(0.5), coeff1(1.0), 0.0, 100, 13),
                  InvalidInputError);
  CHECK_THROWS_AS(finite_difference_check(spec, coeff1(0.5), coeff1(1.0), -1e-3, 100, 13),
                  InvalidInputError);
}

TEST_CASE("pathwise covariation bounds hold on simulated records") {
  const ProblemSpec spec = make_double_well();
  CoeffVector a(3);
  a << 0.2, -0.1, 0.15;
  std::vector<TrajectoryRecord> recs = simulate_records(spec, a, 300, 5, 2);
  BoundReport rep = bound_checks(recs, spec, a);
  CHECK(rep.pass);
  CHECK(rep.n_records == 300);
  CHECK(rep.cauchy_schwarz_violations == 0);
  CHECK(rep.growth_violations == 0);

  SUBCASE("a corrupted cross-covariation is caught by Cauchy-Schwarz") {
    recs[0].gram(0, 1) = recs[0].gram(1, 0) =
        10.0 * std::sqrt(recs[0].gram(0, 0) * recs[0].gram(1, 1)) + 1.0;
    const BoundReport bad = bound_checks(recs, spec, a);
    CHECK(!bad.pass);
    CHECK(bad.cauchy_schwarz_violations >= 1);
  }
  SUBCASE("an inflated diagonal is caught by the growth bound") {
    recs[0].gram(0, 0) = 100.0 * recs[0].tau + 1.0;
    const BoundReport bad = bound_checks(recs, spec, a);
    CHECK(!bad.pass);
    CHECK(bad.growth_violations >= 1);
  }
}

TEST_CASE("halved-step probe reports the gap it measured") {
  const ProblemSpec spec = make_brownian_exit(1.0);
  const DtHalvingProbe probe = dt_halving_probe(spec, coeff1(1.0), 1500, 17, 2);
  CHECK(std::isfinite(probe.value_dt.mean));
  CHECK(std::isfinite(probe.value_half_dt.mean));
  CHECK(probe.bias_estimate ==
        doctest::Approx(probe.value_dt.mean - probe.value_half_dt.mean));
}

TEST_CASE("second-derivative statistic reproduces its closed form") {
  SUBCASE("matches the polynomial at b = 1") {
    const NonconvexityResult res = reproduce_nonconvexity(1.0, 5000, 1e-3, 23, true, 2);
    CHECK(res.oracle == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(std::abs(res.estimate.mean - res.oracle) <
          3.0 * res.estimate.std_error + 0.15);
  }
  SUBCASE("negative inside the nonconvexity window") {
    const NonconvexityResult res = reproduce_nonconvexity(0.3, 5000, 1e-3, 23, true, 2);
    CHECK(res.estimate.mean + 2.0 * res.estimate.std_error < 0.0);
    CHECK(res.oracle < 0.0);
  }
}

TEST_CASE("closed-form suite passes and unknown suites are rejected") {
  const std::vector<CheckResult> results = run_verify_suite("formulas", 29, 1);
  CHECK(results.size() == 11);
  for (const CheckResult& c : results) {
    CAPTURE(c.check_name);
    CHECK(!c.check_name.empty());
    CHECK(std::isfinite(c.value));
    CHECK(c.pass);
  }
  CHECK_THROWS_AS(run_verify_suite("nope", 29, 1), InvalidInputError);
}

TEST_CASE("report serialization") {
  std::vector<CheckResult> results;
  results.push_back({"alpha", 1.0, 1.0, 0.1, true});
  results.push_back({"beta", 2.0, 1.0, 0.1, false});
  const nlohmann::json j = report_to_json(results);
  CHECK(j.at("checks").size() == 2);
  CHECK(j.at("all_pass").get<bool>() == false);
  CHECK(j.at("checks")[0].at("check_name").get<std::string>() == "alpha");
  CHECK(j.at("checks")[0].at("pass").get<bool>() == true);
  CHECK(j.at("checks")[1].at("value").get<double>() == 2.0);

  results.pop_back();
  CHECK(report_to_json(results).at("all_pass").get<bool>() == true);
}

TEST_CASE("q-sweep CSV shape") {
  std::ostringstream os;
  write_q_sweep_csv(os, {0.5, 1.0}, 400, 2e-3, 31, true, 2);
  std::istringstream in(os.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "b,estimate,std_error,oracle");
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 2);
  // The oracle column must carry the closed form for each grid point.
  const auto oracle_of = [](const std::string& row) {
    const std::size_t pos = row.rfind(',');
    return std::stod(row.substr(pos + 1));
  };
  CHECK(oracle_of(rows[0]) == doctest::Approx(q_polynomial(0.5)).epsilon(1e-12));
  CHECK(oracle_of(rows[1]) == doctest::Approx(q_polynomial(1.0)).epsilon(1e-12));
}
