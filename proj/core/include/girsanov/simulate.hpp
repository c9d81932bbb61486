#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "girsanov/model.hpp"
#include "girsanov/rng.hpp"

namespace girsanov {

/// Everything the estimators need from one trajectory, accumulated in a single pass:
///   m[k]       = integral of (f^+ b_k) . dB up to the stop (martingale value),
///   gram[k][l] = integral of b_k . (f f^T)^+ b_l dt        (quadratic covariation).
/// Left-endpoint quadrature at every step including the exit step. The control enters
/// only through the simulated path: the derived statistics for u^a are a.m and
/// a.gram.a by linearity.
struct TrajectoryRecord {
  double tau = 0.0;
  Eigen::VectorXd exit_state;
  bool censored = false;
  double phi = 0.0;
  Eigen::VectorXd m;
  Eigen::MatrixXd gram;
  std::int64_t n_steps = 0;
};

/// Identifies one trajectory's private random substream.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t sample_index = 0;
};

/// Euler-Maruyama integration of dX = (g + u^a) dt + f dB from spec.initial_state,
/// stopped at the first grid point outside the domain (or by the bridge coin when
/// spec.bridge is set) or truncated at t_max. Pure function of (spec, a, stream).
///
/// Exit conventions: without the bridge the recorded exit state is the first grid
/// point outside the domain (terminal costs must accept a thin shell around the box);
/// with the bridge, an intra-step exit places the crossed coordinate exactly on its
/// face. Censored paths keep phi accumulated up to t_max plus the terminal cost at the
/// censoring state, and are flagged so estimators can report the censored fraction.
TrajectoryRecord simulate_path(const ProblemSpec& spec, const CoeffVector& a,
                               RngStream stream);

/// n independent trajectories with streams (seed, 0..n-1), generated by `threads`
/// workers (0 = use GIRSANOV_GRAD_THREADS, default 1). The result is identical for
/// every worker count: sample i always uses stream (seed, i) and lands at index i.
std::vector<TrajectoryRecord> simulate_records(const ProblemSpec& spec,
                                               const CoeffVector& a, std::int64_t n,
                                               std::uint64_t seed, int threads = 0);

/// Doleans exponential reweighting factor exp(v.m - 0.5 v.gram.v) for tilting the
/// path law by the control v. Throws EstimatorUnusableError if the exponent would
/// overflow double range.
double exponential_martingale(const TrajectoryRecord& rec, const CoeffVector& v);

/// Probability that a Brownian bridge from x0 to x1 (one step of size dt, noise scale
/// sigma) crossed the barrier although both endpoints are on the same side:
/// exp(-2 (barrier - x0)(barrier - x1) / (sigma^2 dt)).
double bridge_exit_probability(double x0, double x1, double barrier, double sigma,
                               double dt);

/// Resolves a worker count: positive request wins, else GIRSANOV_GRAD_THREADS, else 1.
int resolve_threads(int requested);

/// One CSV row per record: tau, censored, phi, m..., gram upper triangle (row-major).
void write_records_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records);

}  // namespace girsanov
