#pragma once

#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "girsanov/errors.hpp"
#include "girsanov/field.hpp"

namespace girsanov {

/// Coefficients a of the control u^a = sum_k a_k b_k over the declared basis.
using CoeffVector = Eigen::VectorXd;

/// Open axis-aligned box; leaving it is the exit event.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  bool contains(const double* x, int d) const {
    for (int j = 0; j < d; ++j) {
      if (!(x[j] > lo[j] && x[j] < hi[j])) return false;
    }
    return true;
  }
};

/// One control-basis element with its declared sup-norm bound. The bound is declared,
/// not estimated: boundedness of an arbitrary evaluator cannot be checked mechanically.
struct BasisEntry {
  VectorField field;
  double sup_bound = 1.0;
};

/// Full description of one first-exit control problem:
///   dX = (g + u^a)(t, X) dt + f(t, X) dB,   stopped when X leaves the domain,
/// with path cost phi = integral of running_cost dt + terminal_cost at the stop, and
/// objective Phi(a) = E[phi] + lambda * (relative-entropy cost of u^a).
struct ProblemSpec {
  int dimension = 1;
  Box domain;
  VectorField drift;
  MatrixField diffusion;
  /// Ellipticity constant: y . (f f^T)^+ y <= alpha^{-2} |y|^2 on the domain.
  double alpha = 1.0;
  ScalarField running_cost;
  ScalarField terminal_cost;
  std::vector<BasisEntry> basis;
  double lambda = 1.0;
  Eigen::VectorXd initial_state;
  double dt = 1e-3;
  double t_max = 10.0;
  /// Brownian-bridge correction for exits between grid points.
  bool bridge = false;
  /// When true, reaching t_max is a genuine stop (deterministic horizon), not censoring.
  bool horizon_is_exit = false;
  /// Rate hint used only to place the admissibility warning threshold for reweighting.
  double lambda0_hint = 1.0;
  /// Relative singular-value cutoff for pseudoinverses.
  double svd_rel_tol = 1e-12;

  int n_basis() const { return static_cast<int>(basis.size()); }

  /// Throws InvalidInputError if any structural invariant fails.
  void validate() const;
};

/// Applies the Moore-Penrose pseudoinverse (f f^T)^+ to y. Singular values of f below
/// rel_tol times the largest are treated as exactly zero.
Eigen::VectorXd pseudo_apply(const Eigen::MatrixXd& f_matrix, const Eigen::VectorXd& y,
                             double rel_tol = 1e-12);

/// Sup-norm radius of the ball of controls for which the exponential-integrability
/// assumptions behind every derivative formula are guaranteed:
/// r = 2 alpha sqrt(lambda0) (1 - 1/sqrt(2)).
double admissible_radius(double alpha, double lambda0);

/// Largest q such that the reweighting factor for a perturbation of sup-norm v_norm is
/// guaranteed to lie in L^q. Returns +infinity for v_norm = 0 and 1.0 when no q > 1
/// is guaranteed (v_norm at or beyond the integrability boundary).
double integrability_exponent(double alpha, double lambda_u, double v_norm);

/// u^a(t, x) = sum_k a_k b_k(t, x); exactly linear in a.
Eigen::VectorXd evaluate_control(const ProblemSpec& spec, const CoeffVector& a, double t,
                                 const Eigen::VectorXd& x);

/// Sup-norm bound for u^a implied by the declared basis bounds: sum_k |a_k| bound_k.
double control_sup_bound(const ProblemSpec& spec, const CoeffVector& a);

/// Unit-diffusion drift -1 on the interval (-2, b). With the constant control u = 1 the
/// path is a standard Brownian motion, so every exit statistic has a closed form; the
/// basis is the single constant field {1}.
ProblemSpec make_brownian_exit(double b);

/// Overdamped double-well diffusion dX = (-V'(X) + u) dt + sqrt(2 epsilon) dB on
/// (-1.4, 1.4), V(x) = (x^2 - 1)^2 / 4, epsilon = 1/2, with a three-bump Gaussian
/// control basis and quadratic terminal cost.
ProblemSpec make_double_well();

/// Same dynamics with a caller-supplied potential polynomial and noise strength.
ProblemSpec make_double_well(const std::vector<double>& potential_coeffs, double epsilon);

/// Builds a ProblemSpec from its JSON description (see README for the schema).
/// Accepts either {"problem": "<builtin-name>", ...overrides} or a full field-by-field
/// description.
ProblemSpec load_problem(const nlohmann::json& config);
ProblemSpec load_problem_file(const std::string& path);

}  // namespace girsanov
