#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "girsanov/model.hpp"
#include "girsanov/simulate.hpp"

namespace girsanov {

/// A Monte Carlo mean with its standard error and censoring diagnostics.
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t n_samples = 0;
  double censored_fraction = 0.0;
};

/// First- or second-order derivative estimate. For order 1 `values` is n x 1; for
/// order 2 it is a symmetric n x n matrix whose (k,l) and (l,k) entries come from the
/// identical statistic, so symmetry is exact by construction.
struct DerivativeEstimate {
  int order = 1;
  Eigen::MatrixXd values;
  Eigen::MatrixXd std_errors;
};

enum class DerivativeKind { plain, entropy };

/// Result of a control-variate adjustment.
struct ControlVariateResult {
  double beta = 0.0;
  McEstimate adjusted;
  /// Predicted variance ratio 1 - Corr(primary, control)^2.
  double reduction = 1.0;
};

// ---------------------------------------------------------------------------
// Record-level estimators. All entries of a derivative estimate are computed from the
// same record set (common random numbers), and every reduction runs in sample-index
// order with compensated summation, so results do not depend on the worker count used
// to generate the records.
// ---------------------------------------------------------------------------

/// Objective estimate: mean of phi + (lambda/2) a.gram.a.
McEstimate estimate_phi(const std::vector<TrajectoryRecord>& records, double lambda,
                        const CoeffVector& a);

/// Gradient statistic: entry k is the mean of
///   (phi + lambda (0.5 (a.m)^2 + a.m)) * m[k].
DerivativeEstimate estimate_gradient(const std::vector<TrajectoryRecord>& records,
                                     double lambda, const CoeffVector& a);

/// Hessian statistic: entry (k,l) is the mean of
///   (phi + lambda (0.5 (a.m)^2 + 2 a.m + 1)) * m[k] * m[l].
DerivativeEstimate estimate_hessian(const std::vector<TrajectoryRecord>& records,
                                    double lambda, const CoeffVector& a);

/// Higher-order directional statistic: mean of S * prod_k (v_k . m) where S = phi for
/// kind `plain` and S = (a.m)^2 + 2 p (a.m) + p (p-1), p = directions.size(), for kind
/// `entropy` (the entropy kind carries no lambda factor; see estimate_gradient for the
/// scaling used by the first-order objective derivative).
McEstimate estimate_nth_derivative(const std::vector<TrajectoryRecord>& records,
                                   const CoeffVector& a,
                                   const std::vector<CoeffVector>& directions,
                                   DerivativeKind kind);

/// Reweighted mean of phi: mean of phi * exp(w.m - 0.5 w.gram.w) over records
/// simulated at some control a_sim, estimating the mean of phi under a_sim + w.
McEstimate reweighted_expectation(const std::vector<TrajectoryRecord>& records,
                                  const CoeffVector& w);

/// Relative entropy between the path law at a and at a + w restricted to the stopped
/// paths: primary (covariation) form 0.5 mean(w.gram.w); if martingale_form is given
/// it receives the alternative 0.5 mean((w.m)^2), equal in expectation by the Ito
/// isometry.
McEstimate estimate_kl(const std::vector<TrajectoryRecord>& records, const CoeffVector& w,
                       McEstimate* martingale_form = nullptr);

/// Free energy -lambda log mean(exp(-phi / lambda)) over uncontrolled records, with a
/// delta-method standard error; a lower bound for the objective at every control.
McEstimate estimate_free_energy(const std::vector<TrajectoryRecord>& records,
                                double lambda);

// ---------------------------------------------------------------------------
// Spec-level convenience wrappers: generate the record set (streams seed, 0..n-1) and
// delegate. Estimators called with the same (spec, a, n, seed) therefore share one
// record set and are jointly consistent.
// ---------------------------------------------------------------------------

McEstimate estimate_phi(const ProblemSpec& spec, const CoeffVector& a, std::int64_t n,
                        std::uint64_t seed, int threads = 0);
DerivativeEstimate estimate_gradient(const ProblemSpec& spec, const CoeffVector& a,
                                     std::int64_t n, std::uint64_t seed, int threads = 0);
DerivativeEstimate estimate_hessian(const ProblemSpec& spec, const CoeffVector& a,
                                    std::int64_t n, std::uint64_t seed, int threads = 0);
McEstimate estimate_nth_derivative(const ProblemSpec& spec, const CoeffVector& a,
                                   const std::vector<CoeffVector>& directions,
                                   DerivativeKind kind, std::int64_t n,
                                   std::uint64_t seed, int threads = 0);
/// Simulates at a_sim and reweights by w; warns on stderr when the declared sup-norm
/// of u^w exceeds the admissibility radius for (spec.alpha, spec.lambda0_hint).
McEstimate reweighted_expectation(const ProblemSpec& spec, const CoeffVector& a_sim,
                                  const CoeffVector& w, std::int64_t n,
                                  std::uint64_t seed, int threads = 0);
McEstimate estimate_kl(const ProblemSpec& spec, const CoeffVector& a,
                       const CoeffVector& w, std::int64_t n, std::uint64_t seed,
                       McEstimate* martingale_form = nullptr, int threads = 0);
/// Uncontrolled (a = 0) records; `lambda` may differ from spec.lambda.
McEstimate estimate_free_energy(const ProblemSpec& spec, double lambda, std::int64_t n,
                                std::uint64_t seed, int threads = 0);

// ---------------------------------------------------------------------------
// Control variates.
// ---------------------------------------------------------------------------

/// Classic control-variate adjustment of mean(primary) using a variate with known mean
/// `control_mean`: beta = sample Cov(primary, control) / Var(control), adjusted mean =
/// mean(primary) + beta (control_mean - mean(control)). Throws DegenerateControlError
/// when the control has (numerically) zero variance.
ControlVariateResult control_variate_beta(const std::vector<double>& primary,
                                          const std::vector<double>& control,
                                          double control_mean);

/// Solves (sample covariance of the columns of m_samples) z = gradient, the
/// coefficient vector of the best linear combination of the per-basis martingale
/// variates; the covariance is ridged by 1e-10 trace/n before the solve.
Eigen::VectorXd optimal_cv_coefficients(const Eigen::MatrixXd& m_samples,
                                        const Eigen::VectorXd& gradient);

/// Efficiency heuristic: a variate with per-sample cost cost_control pays off against
/// a primary of cost cost_primary iff |corr| > sqrt(cost_control / (cost_primary +
/// cost_control)).
bool cv_efficiency_gate(double corr, double cost_primary, double cost_control);

// ---------------------------------------------------------------------------
// Shared reduction helpers (sample-index order, compensated).
// ---------------------------------------------------------------------------

/// Mean and standard error of `values` by compensated two-pass summation in index
/// order; `censored` may be empty (fraction 0).
McEstimate reduce_mean(const std::vector<double>& values,
                       const std::vector<TrajectoryRecord>* records = nullptr);

double censored_fraction(const std::vector<TrajectoryRecord>& records);

/// Throws DegenerateEstimateError when every record is censored.
void require_usable(const std::vector<TrajectoryRecord>& records);

}  // namespace girsanov
