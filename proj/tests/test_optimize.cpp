#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "girsanov/estimate.hpp"
#include "girsanov/model.hpp"
#include "girsanov/optimize.hpp"
#include "girsanov/verify.hpp"

using namespace girsanov;

namespace {

CoeffVector coeff1(double v) {
  CoeffVector a(1);
  a << v;
  return a;
}

}  // namespace

TEST_CASE("newton step core: exact solve, ridging, and input validation") {
  SUBCASE("well-conditioned scalar system") {
    NewtonInfo info;
    const CoeffVector next = newton_step_from(Eigen::VectorXd::Constant(1, 3.0),
                                              Eigen::MatrixXd::Constant(1, 1, 2.0),
                                              coeff1(1.0), 1e-8, &info);
    CHECK(next(0) == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(!info.ridged);
    CHECK(info.min_eigenvalue == doctest::Approx(2.0));
  }
  SUBCASE("identity curvature: the step is exactly the gradient") {
    Eigen::VectorXd g(2);
    g << 0.25, -1.5;
    CoeffVector a(2);
    a << 1.0, 1.0;
    const CoeffVector next =
        newton_step_from(g, Eigen::MatrixXd::Identity(2, 2), a, 1e-8, nullptr);
    CHECK(next(0) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(next(1) == doctest::Approx(2.5).epsilon(1e-15));
  }
  SUBCASE("indefinite curvature is ridged up to the floor") {
    NewtonInfo info;
    const CoeffVector next = newton_step_from(Eigen::VectorXd::Constant(1, 1.0),
                                              Eigen::MatrixXd::Constant(1, 1, -1.0),
                                              coeff1(0.0), 0.5, &info);
    CHECK(info.ridged);
    CHECK(info.min_eigenvalue == doctest::Approx(-1.0));
    CHECK(info.ridge_added == doctest::Approx(1.5));
    CHECK(next(0) == doctest::Approx(-2.0).epsilon(1e-12));  // 0 - 1/0.5
  }
  SUBCASE("asymmetric input is symmetrized before the eigenvalue test") {
    Eigen::MatrixXd h(2, 2);
    h << 2.0, 1.0, 0.0, 2.0;  // symmetrized: [[2, .5], [.5, 2]]
    Eigen::VectorXd g(2);
    g << 1.0, 0.0;
    NewtonInfo info;
    const CoeffVector next =
        newton_step_from(g, h, CoeffVector::Zero(2), 1e-8, &info);
    CHECK(info.min_eigenvalue == doctest::Approx(1.5));
    // solve [[2,.5],[.5,2]] s = (1,0): s = (8/15, -2/15)
    CHECK(next(0) == doctest::Approx(-8.0 / 15.0).epsilon(1e-12));
    CHECK(next(1) == doctest::Approx(2.0 / 15.0).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(newton_step_from(Eigen::VectorXd::Zero(2),
                                     Eigen::MatrixXd::Identity(1, 1), coeff1(0.0),
                                     1e-8, nullptr),
                    InvalidInputError);
  }
}

TEST_CASE("gradient descent on the exactly quadratic instance") {
  // At a deterministic horizon with zero costs the sample-average objective is
  // exactly (lambda/2) a^2 t_max for every record set, and the gradient statistic
  // vanishes identically at a = 0, so descent must reach the minimizer.
  const ProblemSpec spec = make_fixed_horizon_drift();
  const OptTrace trace = gradient_descent(spec, coeff1(1.0), 2000, 11, 60, 1e-3, 1);
  REQUIRE(!trace.iterates.empty());
  CHECK(trace.termination == Termination::gradient_tolerance);
  CHECK(std::abs(trace.iterates.back()(0)) < 1e-3);
  // Armijo guarantees strict decrease of the sample-average objective.
  for (std::size_t j = 1; j < trace.phi_values.size(); ++j)
    CHECK(trace.phi_values[j].mean < trace.phi_values[j - 1].mean);
  CHECK(trace.iterates.size() == trace.phi_values.size());
  CHECK(trace.iterates.size() == trace.grad_norms.size());
  CHECK(trace.iterates.size() == trace.step_sizes.size());
  CHECK(trace.step_sizes[0] == 1.0);
}

TEST_CASE("gradient descent termination bookkeeping") {
  const ProblemSpec spec = make_fixed_horizon_drift();
  SUBCASE("already at the stationary point") {
    const OptTrace trace = gradient_descent(spec, coeff1(0.0), 500, 11, 10, 1e-9, 1);
    CHECK(trace.termination == Termination::gradient_tolerance);
    CHECK(trace.iterates.size() == 1);  // no steps taken
  }
  SUBCASE("iteration cap") {
    const OptTrace trace = gradient_descent(spec, coeff1(1.0), 500, 11, 1, 0.0, 1);
    CHECK(trace.termination == Termination::max_iterations);
    CHECK(trace.iterates.size() == 2);
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(gradient_descent(spec, coeff1(1.0), 500, 11, -1, 1e-3, 1),
                    InvalidInputError);
    CHECK_THROWS_AS(gradient_descent(spec, coeff1(1.0), 500, 11, 10, -1.0, 1),
                    InvalidInputError);
  }
}

TEST_CASE("newton iteration converges on the quadratic instance") {
  // The curvature statistic at a deterministic horizon overstates the true
  // curvature (it has mean lambda (t_max + 1.5 a^2 t_max^2) rather than
  // lambda t_max), so a single step undershoots; iterating still contracts to the
  // stationary point because the gradient statistic vanishes at a = 0.
  const ProblemSpec spec = make_fixed_horizon_drift();
  const OptTrace trace = newton_solve(spec, coeff1(1.0), 2000, 11, 40, 1e-3, 0.0, 1);
  CHECK(trace.termination == Termination::gradient_tolerance);
  CHECK(std::abs(trace.iterates.back()(0)) < 1e-3);
  // The first step must land visibly short of 0 (near 1 - 2/5 = 0.6).
  REQUIRE(trace.iterates.size() >= 2);
  CHECK(trace.iterates[1](0) > 0.4);
  CHECK(trace.iterates[1](0) < 0.8);
}

TEST_CASE("newton reports the ridge fallback when curvature stays indefinite") {
  // A strongly concave terminal cost makes the curvature statistic negative, so the
  // step is ridged; with the tolerance unmet the run must say so.
  ProblemSpec spec = make_fixed_horizon_drift();
  spec.terminal_cost = ScalarField::polynomial({0.0, 0.0, -2.0});  // -2 x^2
  const OptTrace trace = newton_solve(spec, coeff1(0.0), 500, 11, 1, 1e-12, 0.0, 1);
  CHECK(trace.termination == Termination::hessian_indefinite_fallback);
}

TEST_CASE("newton step wrapper matches the core on shared records") {
  const ProblemSpec spec = make_fixed_horizon_drift();
  const CoeffVector a = coeff1(0.8);
  const std::vector<TrajectoryRecord> records = simulate_records(spec, a, 400, 5, 1);
  const DerivativeEstimate g = estimate_gradient(records, spec.lambda, a);
  const DerivativeEstimate h = estimate_hessian(records, spec.lambda, a);
  NewtonInfo info_direct;
  const CoeffVector direct =
      newton_step_from(g.values.col(0), h.values, a, 1e-8, &info_direct);
  NewtonInfo info_wrapped;
  const CoeffVector wrapped = newton_step(spec, a, 400, 5, 1e-8, &info_wrapped, 1);
  CHECK(wrapped(0) == direct(0));
  CHECK(info_wrapped.min_eigenvalue == info_direct.min_eigenvalue);
}

TEST_CASE("convexity probe: jackknife error equals the classical error for one basis") {
  // With a single basis element the smallest eigenvalue is the scalar mean itself,
  // so the delete-one jackknife reduces to the classical standard error.
  const ProblemSpec spec = make_fixed_horizon_drift();
  const CoeffVector a = coeff1(0.5);
  const ConvexityEstimate conv = check_convexity(spec, a, 300, 21, 1);
  const DerivativeEstimate hess = estimate_hessian(spec, a, 300, 21, 1);
  CHECK(conv.min_eigenvalue == doctest::Approx(hess.values(0, 0)).epsilon(1e-12));
  CHECK(conv.std_error == doctest::Approx(hess.std_errors(0, 0)).epsilon(1e-10));
}

TEST_CASE("termination labels") {
  CHECK(std::string(to_string(Termination::gradient_tolerance)) == "gradient_tolerance");
  CHECK(std::string(to_string(Termination::max_iterations)) == "max_iterations");
  CHECK(std::string(to_string(Termination::line_search_failure)) ==
        "line_search_failure");
  CHECK(std::string(to_string(Termination::hessian_indefinite_fallback)) ==
        "hessian_indefinite_fallback");
}

TEST_CASE("trace serialization") {
  const ProblemSpec spec = make_fixed_horizon_drift();
  const OptTrace trace = gradient_descent(spec, coeff1(1.0), 300, 11, 3, 1e-6, 1);

  std::ostringstream os;
  write_trace_csv(os, trace);
  std::istringstream in(os.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,a_0,phi_mean,phi_se,grad_norm,step");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(trace.iterates.size()));

  const nlohmann::json j = trace_to_json(trace);
  CHECK(j.at("iterates").size() == trace.iterates.size());
  CHECK(j.at("phi").size() == trace.phi_values.size());
  CHECK(j.at("grad_norms").size() == trace.grad_norms.size());
  CHECK(j.at("termination").is_string());
}
