#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "girsanov/estimate.hpp"
#include "girsanov/model.hpp"

namespace girsanov {

enum class Termination {
  gradient_tolerance,
  max_iterations,
  line_search_failure,
  hessian_indefinite_fallback,
};

const char* to_string(Termination t);

/// History of an optimization run. All lists have one entry per accepted iterate;
/// step_sizes[j] is the step that produced iterate j (entry 0 holds the line-search
/// seed value, and is 1 for Newton iterates taking the full step).
struct OptTrace {
  std::vector<CoeffVector> iterates;
  std::vector<McEstimate> phi_values;
  std::vector<double> grad_norms;
  std::vector<double> step_sizes;
  Termination termination = Termination::max_iterations;
};

/// Diagnostics from one Newton step.
struct NewtonInfo {
  bool ridged = false;
  double min_eigenvalue = 0.0;
  double ridge_added = 0.0;
};

/// Jackknife estimate of the smallest Hessian eigenvalue.
struct ConvexityEstimate {
  double min_eigenvalue = 0.0;
  double std_error = 0.0;
};

/// Sample-average gradient descent: the record-generating seed is fixed across
/// iterations, so the optimized function is a deterministic sample-average objective
/// and descent is assertable. Steps use Armijo backtracking (sufficient decrease 0.1,
/// halving from h = 1, at most 40 halvings; exhaustion terminates the run with
/// line_search_failure), where the decrease test runs on the per-sample paired
/// difference of the objective statistic between the trial and current evaluations
/// (they share streams) and is relaxed by two standard errors of that difference —
/// zero relaxation whenever the statistic is a deterministic function of the
/// control. Stops when the gradient-statistic norm falls to grad_tol.
OptTrace gradient_descent(const ProblemSpec& spec, const CoeffVector& a0,
                          std::int64_t n_samples, std::uint64_t seed,
                          std::int64_t max_iter, double grad_tol, int threads = 0);

/// One Newton step on shared records: solves J s = grad for the symmetrized Hessian
/// estimate J (ridged up to ridge_floor if its smallest eigenvalue is below it;
/// ridge_floor <= 0 selects the default 1e-8 (1 + ||J||_F)) and returns a - s.
CoeffVector newton_step(const ProblemSpec& spec, const CoeffVector& a,
                        std::int64_t n_samples, std::uint64_t seed,
                        double ridge_floor = 0.0, NewtonInfo* info = nullptr,
                        int threads = 0);

/// Pure linear-algebra core of newton_step, exposed for direct testing: ridges
/// `hessian` up to ridge_floor if needed and returns a minus the solved step.
CoeffVector newton_step_from(const Eigen::VectorXd& gradient,
                             const Eigen::MatrixXd& hessian, const CoeffVector& a,
                             double ridge_floor = 0.0, NewtonInfo* info = nullptr);

/// Repeated newton_step with the same fixed seed until the gradient-statistic norm
/// falls to grad_tol or max_iter is reached. If the final accepted step needed the
/// ridge and the tolerance was not met, termination reports
/// hessian_indefinite_fallback instead of max_iterations.
OptTrace newton_solve(const ProblemSpec& spec, const CoeffVector& a0,
                      std::int64_t n_samples, std::uint64_t seed, std::int64_t max_iter,
                      double grad_tol, double ridge_floor = 0.0, int threads = 0);

/// Smallest eigenvalue of the symmetrized Hessian estimate with a delete-one jackknife
/// standard error. For a single basis function this equals the scalar Hessian estimate
/// and its classical standard error.
ConvexityEstimate check_convexity(const ProblemSpec& spec, const CoeffVector& a,
                                  std::int64_t n_samples, std::uint64_t seed,
                                  int threads = 0);

/// CSV: one row per iterate: j, a..., phi_mean, phi_se, grad_norm, step.
void write_trace_csv(std::ostream& os, const OptTrace& trace);

nlohmann::json trace_to_json(const OptTrace& trace);

}  // namespace girsanov
