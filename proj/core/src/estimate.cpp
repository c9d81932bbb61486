#include "girsanov/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include <Eigen/Cholesky>

#include "girsanov/errors.hpp"

namespace girsanov {

namespace {

/// Compensated (Kahan) accumulator; used everywhere so reductions are exactly
/// reproducible in sample-index order regardless of worker count.
class KahanSum {
 public:
  void add(double value) {
    const double y = value - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

McEstimate reduce_span(const double* values, std::int64_t n,
                       const std::vector<TrajectoryRecord>* records) {
  if (n < 1) throw InvalidInputError("reduce_mean: need at least one value");
  KahanSum total;
  for (std::int64_t i = 0; i < n; ++i) total.add(values[i]);
  const double mean = total.value() / static_cast<double>(n);
  double se = 0.0;
  if (n > 1) {
    KahanSum ss;
    for (std::int64_t i = 0; i < n; ++i) {
      const double dev = values[i] - mean;
      ss.add(dev * dev);
    }
    se = std::sqrt(ss.value() / (static_cast<double>(n - 1) * static_cast<double>(n)));
  }
  McEstimate est;
  est.mean = mean;
  est.std_error = se;
  est.n_samples = n;
  est.censored_fraction = records ? censored_fraction(*records) : 0.0;
  return est;
}

void check_coeff_size(const std::vector<TrajectoryRecord>& records,
                      const CoeffVector& a, const char* who) {
  if (records.empty())
    throw InvalidInputError(std::string(who) + ": empty record set");
  if (a.size() != records.front().m.size())
    throw InvalidInputError(std::string(who) +
                            ": coefficient length does not match record basis size");
}

}  // namespace

McEstimate reduce_mean(const std::vector<double>& values,
                       const std::vector<TrajectoryRecord>* records) {
  return reduce_span(values.data(), static_cast<std::int64_t>(values.size()), records);
}

double censored_fraction(const std::vector<TrajectoryRecord>& records) {
  if (records.empty()) return 0.0;
  std::int64_t censored = 0;
  for (const TrajectoryRecord& rec : records) censored += rec.censored ? 1 : 0;
  return static_cast<double>(censored) / static_cast<double>(records.size());
}

void require_usable(const std::vector<TrajectoryRecord>& records) {
  if (records.empty())
    throw InvalidInputError("require_usable: empty record set");
  for (const TrajectoryRecord& rec : records)
    if (!rec.censored) return;
  throw DegenerateEstimateError(
      "every sampled path was censored at the time horizon; increase t_max");
}

McEstimate estimate_phi(const std::vector<TrajectoryRecord>& records, double lambda,
                        const CoeffVector& a) {
  check_coeff_size(records, a, "estimate_phi");
  require_usable(records);
  const std::int64_t n = static_cast<std::int64_t>(records.size());
  std::vector<double> stats(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const TrajectoryRecord& rec = records[static_cast<std::size_t>(i)];
    stats[static_cast<std::size_t>(i)] =
        rec.phi + 0.5 * lambda * a.dot(rec.gram * a);
  }
  return reduce_span(stats.data(), n, &records);
}

DerivativeEstimate estimate_gradient(const std::vector<TrajectoryRecord>& records,
                                     double lambda, const CoeffVector& a) {
  check_coeff_size(records, a, "estimate_gradient");
  require_usable(records);
  const std::int64_t n = static_cast<std::int64_t>(records.size());
  const Eigen::Index nb = a.size();
  std::vector<double> weight(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const TrajectoryRecord& rec = records[static_cast<std::size_t>(i)];
    const double s = a.dot(rec.m);
    weight[static_cast<std::size_t>(i)] = rec.phi + lambda * (0.5 * s * s + s);
  }
  DerivativeEstimate out;
  out.order = 1;
  out.values.resize(nb, 1);
  out.std_errors.resize(nb, 1);
  std::vector<double> stats(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < nb; ++k) {
    for (std::int64_t i = 0; i < n; ++i) {
      stats[static_cast<std::size_t>(i)] =
          weight[static_cast<std::size_t>(i)] *
          records[static_cast<std::size_t>(i)].m(k);
    }
    const McEstimate est = reduce_span(stats.data(), n, nullptr);
    out.values(k, 0) = est.mean;
    out.std_errors(k, 0) = est.std_error;
  }
  return out;
}

DerivativeEstimate estimate_hessian(const std::vector<TrajectoryRecord>& records,
                                    double lambda, const CoeffVector& a) {
  check_coeff_size(records, a, "estimate_hessian");
  require_usable(records);
  const std::int64_t n = static_cast<std::int64_t>(records.size());
  const Eigen::Index nb = a.size();
  std::vector<double> weight(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const TrajectoryRecord& rec = records[static_cast<std::size_t>(i)];
    const double s = a.dot(rec.m);
    weight[static_cast<std::size_t>(i)] =
        rec.phi + lambda * (0.5 * s * s + 2.0 * s + 1.0);
  }
  DerivativeEstimate out;
  out.order = 2;
  out.values.resize(nb, nb);
  out.std_errors.resize(nb, nb);
  std::vector<double> stats(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < nb; ++k) {
    for (Eigen::Index l = k; l < nb; ++l) {
      for (std::int64_t i = 0; i < n; ++i) {
        const TrajectoryRecord& rec = records[static_cast<std::size_t>(i)];
        stats[static_cast<std::size_t>(i)] =
            weight[static_cast<std::size_t>(i)] * rec.m(k) * rec.m(l);
      }
      const McEstimate est = reduce_span(stats.data(), n, nullptr);
      out.values(k, l) = est.mean;
      out.values(l, k) = est.mean;
      out.std_errors(k, l) = est.std_error;
      out.std_errors(l, k) = est.std_error;
    }
  }
  return out;
}

McEstimate estimate_nth_derivative(const std::vector<TrajectoryRecord>& records,
                                   const CoeffVector& a,
                                   const std::vector<CoeffVector>& directions,
                                   DerivativeKind kind) {
  check_coeff_size(records, a, "estimate_nth_derivative");
  if (directions.empty())
    throw InvalidInputError("estimate_nth_derivative: need at least one direction");
  for (const CoeffVector& v : directions)
    if (v.size() != a.size())
      throw InvalidInputError("estimate_nth_derivative: direction length mismatch");
  require_usable(records);
  const std::int64_t n = static_cast<std::int64_t>(records.size());
  const double p = static_cast<double>(directions.size());
  std::vector<double> stats(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const TrajectoryRecord& rec = records[static_cast<std::size_t>(i)];
    double prod = 1.0;
    for (const CoeffVector& v : directions) prod *= v.dot(rec.m);
    double s_stat;
    if (kind == DerivativeKind::plain) {
      s_stat = rec.phi;
    } else {
      const double s = a.dot(rec.m);
      s_stat = s * s + 2.0 * p * s + p * (p - 1.0);
    }
    stats[static_cast<std::size_t>(i)] = s_stat * prod;
  }
  return reduce_span(stats.data(), n, &records);
}

McEstimate reweighted_expectation(const std::vector<TrajectoryRecord>& records,
                                  const CoeffVector& w) {
  check_coeff_size(records, w, "reweighted_expectation");
  require_usable(records);
  const std::int64_t n = static_cast<std::int64_t>(records.size());
  std::vector<double> stats(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const TrajectoryRecord& rec = records[static_cast<std::size_t>(i)];
    stats[static_cast<std::size_t>(i)] = rec.phi * exponential_martingale(rec, w);
  }
  return reduce_span(stats.data(), n, &records);
}

McEstimate estimate_kl(const std::vector<TrajectoryRecord>& records, const CoeffVector& w,
                       McEstimate* martingale_form) {
  check_coeff_size(records, w, "estimate_kl");
  require_usable(records);
  const std::int64_t n = static_cast<std::int64_t>(records.size());
  std::vector<double> stats(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const TrajectoryRecord& rec = records[static_cast<std::size_t>(i)];
    stats[static_cast<std::size_t>(i)] = 0.5 * w.dot(rec.gram * w);
  }
  McEstimate primary = reduce_span(stats.data(), n, &records);
  if (martingale_form) {
    for (std::int64_t i = 0; i < n; ++i) {
      const TrajectoryRecord& rec = records[static_cast<std::size_t>(i)];
      const double s = w.dot(rec.m);
      stats[static_cast<std::size_t>(i)] = 0.5 * s * s;
    }
    *martingale_form = reduce_span(stats.data(), n, &records);
  }
  return primary;
}

McEstimate estimate_free_energy(const std::vector<TrajectoryRecord>& records,
                                double lambda) {
  if (!(lambda > 0.0))
    throw InvalidInputError("estimate_free_energy: lambda must be positive");
  if (records.empty())
    throw InvalidInputError("estimate_free_energy: empty record set");
  require_usable(records);
  const std::int64_t n = static_cast<std::int64_t>(records.size());

  // Shift by the max exponent so at least one term is exactly 1; this keeps the mean
  // away from 0 and the log well conditioned.
  double shift = -std::numeric_limits<double>::infinity();
  for (const TrajectoryRecord& rec : records)
    shift = std::max(shift, -rec.phi / lambda);
  if (!std::isfinite(shift))
    throw EstimatorUnusableError("estimate_free_energy: costs are not finite");

  std::vector<double> ys(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    ys[static_cast<std::size_t>(i)] =
        std::exp(-records[static_cast<std::size_t>(i)].phi / lambda - shift);
  }
  const McEstimate y = reduce_span(ys.data(), n, &records);
  if (!(y.mean > 0.0) || !std::isfinite(y.mean))
    throw EstimatorUnusableError(
        "estimate_free_energy: exponential weights underflowed to zero");

  McEstimate out;
  out.mean = -lambda * (shift + std::log(y.mean));
  // Delta method: d(-lambda log m)/dm = -lambda / m.
  out.std_error = lambda * y.std_error / y.mean;
  out.n_samples = n;
  out.censored_fraction = y.censored_fraction;
  return out;
}

// ---------------------------------------------------------------------------
// Spec-level wrappers.
// ---------------------------------------------------------------------------

McEstimate estimate_phi(const ProblemSpec& spec, const CoeffVector& a, std::int64_t n,
                        std::uint64_t seed, int threads) {
  return estimate_phi(simulate_records(spec, a, n, seed, threads), spec.lambda, a);
}

DerivativeEstimate estimate_gradient(const ProblemSpec& spec, const CoeffVector& a,
                                     std::int64_t n, std::uint64_t seed, int threads) {
  return estimate_gradient(simulate_records(spec, a, n, seed, threads), spec.lambda, a);
}

DerivativeEstimate estimate_hessian(const ProblemSpec& spec, const CoeffVector& a,
                                    std::int64_t n, std::uint64_t seed, int threads) {
  return estimate_hessian(simulate_records(spec, a, n, seed, threads), spec.lambda, a);
}

McEstimate estimate_nth_derivative(const ProblemSpec& spec, const CoeffVector& a,
                                   const std::vector<CoeffVector>& directions,
                                   DerivativeKind kind, std::int64_t n,
                                   std::uint64_t seed, int threads) {
  return estimate_nth_derivative(simulate_records(spec, a, n, seed, threads), a,
                                 directions, kind);
}

McEstimate reweighted_expectation(const ProblemSpec& spec, const CoeffVector& a_sim,
                                  const CoeffVector& w, std::int64_t n,
                                  std::uint64_t seed, int threads) {
  const double sup = control_sup_bound(spec, w);
  const double radius = admissible_radius(spec.alpha, spec.lambda0_hint);
  if (sup > radius) {
    std::cerr << "warning: reweighting perturbation sup-norm " << sup
              << " exceeds the admissible radius " << radius
              << "; importance weights may have heavy tails\n";
  }
  return reweighted_expectation(simulate_records(spec, a_sim, n, seed, threads), w);
}

McEstimate estimate_kl(const ProblemSpec& spec, const CoeffVector& a,
                       const CoeffVector& w, std::int64_t n, std::uint64_t seed,
                       McEstimate* martingale_form, int threads) {
  return estimate_kl(simulate_records(spec, a, n, seed, threads), w, martingale_form);
}

McEstimate estimate_free_energy(const ProblemSpec& spec, double lambda, std::int64_t n,
                                std::uint64_t seed, int threads) {
  const CoeffVector zero = CoeffVector::Zero(spec.n_basis());
  return estimate_free_energy(simulate_records(spec, zero, n, seed, threads), lambda);
}

// ---------------------------------------------------------------------------
// Control variates.
// ---------------------------------------------------------------------------

ControlVariateResult control_variate_beta(const std::vector<double>& primary,
                                          const std::vector<double>& control,
                                          double control_mean) {
  if (primary.size() != control.size())
    throw InvalidInputError("control_variate_beta: sample size mismatch");
  const std::int64_t n = static_cast<std::int64_t>(primary.size());
  if (n < 2)
    throw InvalidInputError("control_variate_beta: need at least two samples");

  const McEstimate p_est = reduce_span(primary.data(), n, nullptr);
  const McEstimate c_est = reduce_span(control.data(), n, nullptr);

  KahanSum cov_sum;
  KahanSum var_c_sum;
  KahanSum var_p_sum;
  for (std::int64_t i = 0; i < n; ++i) {
    const double dp = primary[static_cast<std::size_t>(i)] - p_est.mean;
    const double dc = control[static_cast<std::size_t>(i)] - c_est.mean;
    cov_sum.add(dp * dc);
    var_c_sum.add(dc * dc);
    var_p_sum.add(dp * dp);
  }
  const double denom = static_cast<double>(n - 1);
  const double cov = cov_sum.value() / denom;
  const double var_c = var_c_sum.value() / denom;
  const double var_p = var_p_sum.value() / denom;
  if (!(var_c > 1e-300))
    throw DegenerateControlError(
        "control_variate_beta: control variate has (numerically) zero variance");

  ControlVariateResult out;
  out.beta = cov / var_c;
  std::vector<double> adjusted(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    adjusted[static_cast<std::size_t>(i)] =
        primary[static_cast<std::size_t>(i)] +
        out.beta * (control_mean - control[static_cast<std::size_t>(i)]);
  }
  out.adjusted = reduce_span(adjusted.data(), n, nullptr);
  if (var_p > 0.0) {
    const double corr2 = (cov * cov) / (var_c * var_p);
    out.reduction = 1.0 - std::min(corr2, 1.0);
  } else {
    out.reduction = 1.0;  // constant primary: nothing to reduce
  }
  return out;
}

Eigen::VectorXd optimal_cv_coefficients(const Eigen::MatrixXd& m_samples,
                                        const Eigen::VectorXd& gradient) {
  const Eigen::Index n = m_samples.rows();
  const Eigen::Index nb = m_samples.cols();
  if (nb < 1) throw InvalidInputError("optimal_cv_coefficients: no variates");
  if (gradient.size() != nb)
    throw InvalidInputError("optimal_cv_coefficients: gradient length mismatch");
  if (n < 2)
    throw InvalidInputError("optimal_cv_coefficients: need at least two samples");

  const Eigen::RowVectorXd means = m_samples.colwise().mean();
  const Eigen::MatrixXd centered = m_samples.rowwise() - means;
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);
  // Tiny ridge relative to the average variance keeps the solve well posed without
  // visibly moving well-conditioned solutions.
  const double ridge = 1e-10 * cov.trace() / static_cast<double>(nb);
  cov.diagonal().array() += ridge;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success)
    throw DegenerateControlError(
        "optimal_cv_coefficients: variate covariance is not factorizable");
  Eigen::VectorXd z = ldlt.solve(gradient);
  if (!z.allFinite())
    throw DegenerateControlError(
        "optimal_cv_coefficients: variate covariance is singular");
  return z;
}

bool cv_efficiency_gate(double corr, double cost_primary, double cost_control) {
  if (!(cost_primary > 0.0) || !(cost_control > 0.0))
    throw InvalidInputError("cv_efficiency_gate: costs must be positive");
  if (!(std::abs(corr) <= 1.0 + 1e-12))
    throw InvalidInputError("cv_efficiency_gate: correlation must lie in [-1, 1]");
  return std::abs(corr) > std::sqrt(cost_control / (cost_primary + cost_control));
}

}  // namespace girsanov
