#include "girsanov/simulate.hpp"

#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/SVD>

#include "girsanov/errors.hpp"

namespace girsanov {

namespace {

/// Pseudoinverse data for one diffusion matrix: everything the stepping loop needs.
struct DiffusionData {
  Eigen::MatrixXd f;         // d x d
  Eigen::MatrixXd f_pinv;    // f^+
  Eigen::MatrixXd fft_pinv;  // (f f^T)^+
  Eigen::VectorXd face_sigma;  // per-coordinate noise scale sqrt((f f^T)_jj)
};

DiffusionData decompose_diffusion(Eigen::MatrixXd f, double rel_tol) {
  DiffusionData data;
  data.f = std::move(f);
  const Eigen::Index d = data.f.rows();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(data.f,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rel_tol * sv(0) : 0.0;
  Eigen::VectorXd inv_s(sv.size());
  Eigen::VectorXd inv_s2(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    const bool keep = sv(i) > cutoff && sv(i) > 0.0;
    inv_s(i) = keep ? 1.0 / sv(i) : 0.0;
    inv_s2(i) = keep ? 1.0 / (sv(i) * sv(i)) : 0.0;
  }
  data.f_pinv = svd.matrixV() * inv_s.asDiagonal() * svd.matrixU().transpose();
  data.fft_pinv = svd.matrixU() * inv_s2.asDiagonal() * svd.matrixU().transpose();
  data.face_sigma.resize(d);
  for (Eigen::Index j = 0; j < d; ++j)
    data.face_sigma(j) = data.f.row(j).norm();  // sqrt((f f^T)_jj)
  return data;
}

// Exponents below this make a bridge crossing impossible at double precision.
constexpr double kBridgeExponentFloor = -40.0;

// Dimension caps for the allocation-free stepping loop; larger problems take the
// generic Eigen path.
constexpr int kFastMaxDim = 4;
constexpr int kFastMaxBasis = 8;

/// Allocation-free stepping loop for small problems with constant diffusion: all
/// per-step state lives in stack arrays. Produces the same record contract as the
/// generic loop (left-endpoint quadrature, exit step included).
TrajectoryRecord simulate_path_fast(const ProblemSpec& spec, const CoeffVector& a,
                                    SampleRng& rng, const DiffusionData& diff,
                                    std::int64_t max_steps) {
  const int d = spec.dimension;
  const int nb = spec.n_basis();
  const double dt = spec.dt;
  const double sqrt_dt = std::sqrt(dt);
  const bool has_running_cost = !spec.running_cost.is_zero();
  const bool bridge = spec.bridge;

  double fmat[kFastMaxDim][kFastMaxDim];
  double fp[kFastMaxDim][kFastMaxDim];    // f^+
  double fftp[kFastMaxDim][kFastMaxDim];  // (f f^T)^+
  double lo[kFastMaxDim], hi[kFastMaxDim], fsig[kFastMaxDim];
  for (int j = 0; j < d; ++j) {
    for (int l = 0; l < d; ++l) {
      fmat[j][l] = diff.f(j, l);
      fp[j][l] = diff.f_pinv(j, l);
      fftp[j][l] = diff.fft_pinv(j, l);
    }
    lo[j] = spec.domain.lo(j);
    hi[j] = spec.domain.hi(j);
    fsig[j] = diff.face_sigma(j);
  }
  double acoef[kFastMaxBasis];
  for (int k = 0; k < nb; ++k) acoef[k] = a(k);

  double x[kFastMaxDim], xn[kFastMaxDim], g[kFastMaxDim], db[kFastMaxDim],
      y[kFastMaxDim], w[kFastMaxDim];
  double bv[kFastMaxBasis][kFastMaxDim];
  double m[kFastMaxBasis] = {0.0};
  double gram[kFastMaxBasis][kFastMaxBasis] = {{0.0}};
  for (int j = 0; j < d; ++j) x[j] = spec.initial_state(j);

  double phi_run = 0.0;
  std::int64_t step = 0;
  bool exited = false;
  int exit_face = -1;  // bridge exit face, or -1 for a grid-point exit

  while (step < max_steps) {
    const double t = static_cast<double>(step) * dt;

    spec.drift.eval(t, x, g);
    for (int k = 0; k < nb; ++k) spec.basis[static_cast<std::size_t>(k)].field.eval(t, x, bv[k]);
    if (has_running_cost) phi_run += spec.running_cost(t, x, d) * dt;

    for (int j = 0; j < d; ++j) db[j] = sqrt_dt * rng.gaussian();

    // y = (f^+)^T dB, so m_k += b_k . y
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int l = 0; l < d; ++l) s += fp[l][j] * db[l];
      y[j] = s;
    }
    for (int k = 0; k < nb; ++k) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += bv[k][j] * y[j];
      m[k] += s;
    }
    for (int l = 0; l < nb; ++l) {
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += fftp[j][i] * bv[l][i];
        w[j] = s;
      }
      for (int k = 0; k <= l; ++k) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += bv[k][j] * w[j];
        gram[k][l] += dt * s;
      }
    }

    bool finite = true;
    bool inside = true;
    for (int j = 0; j < d; ++j) {
      double u = 0.0;
      for (int k = 0; k < nb; ++k) u += acoef[k] * bv[k][j];
      double noise = 0.0;
      for (int l = 0; l < d; ++l) noise += fmat[j][l] * db[l];
      const double v = x[j] + (g[j] + u) * dt + noise;
      xn[j] = v;
      finite = finite && std::isfinite(v);
      inside = inside && v > lo[j] && v < hi[j];
    }
    if (!finite) throw SimulationDivergedError(static_cast<std::size_t>(step));

    ++step;

    if (!inside) {
      exited = true;
      break;
    }

    if (bridge) {
      double survival = 1.0;
      double p_total = 0.0;
      double face_p[2 * kFastMaxDim];
      for (int j = 0; j < d; ++j) {
        face_p[2 * j] = 0.0;
        face_p[2 * j + 1] = 0.0;
        const double sigma = fsig[j];
        if (!(sigma > 0.0)) continue;
        const double denom = sigma * sigma * dt;
        const double e_lo = -2.0 * (x[j] - lo[j]) * (xn[j] - lo[j]) / denom;
        const double e_hi = -2.0 * (hi[j] - x[j]) * (hi[j] - xn[j]) / denom;
        if (e_lo > kBridgeExponentFloor) face_p[2 * j] = std::exp(e_lo);
        if (e_hi > kBridgeExponentFloor) face_p[2 * j + 1] = std::exp(e_hi);
        survival *= (1.0 - face_p[2 * j]) * (1.0 - face_p[2 * j + 1]);
        p_total += face_p[2 * j] + face_p[2 * j + 1];
      }
      const double p_exit = 1.0 - survival;
      if (p_exit > 0.0) {
        const double u = rng.uniform01();
        if (u < p_exit) {
          const double u_face = (u / p_exit) * p_total;
          double cum = 0.0;
          int face = 0;
          for (int jf = 0; jf < 2 * d; ++jf) {
            cum += face_p[jf];
            face = jf;
            if (u_face <= cum) break;
          }
          exit_face = face;
          exited = true;
          break;
        }
      }
    }

    for (int j = 0; j < d; ++j) x[j] = xn[j];
  }

  TrajectoryRecord rec;
  rec.n_steps = step;
  rec.tau = static_cast<double>(step) * dt;
  rec.exit_state.resize(d);
  if (exited) {
    for (int j = 0; j < d; ++j) rec.exit_state(j) = xn[j];
    if (exit_face >= 0) {
      const int axis = exit_face / 2;
      rec.exit_state(axis) = (exit_face % 2 == 0) ? lo[axis] : hi[axis];
    }
  } else {
    for (int j = 0; j < d; ++j) rec.exit_state(j) = x[j];
    rec.censored = !spec.horizon_is_exit;
  }
  rec.phi = phi_run + spec.terminal_cost(rec.tau, rec.exit_state.data(), d);
  rec.m.resize(nb);
  for (int k = 0; k < nb; ++k) rec.m(k) = m[k];
  rec.gram.resize(nb, nb);
  for (int k = 0; k < nb; ++k) {
    for (int l = k; l < nb; ++l) {
      rec.gram(k, l) = gram[k][l];
      rec.gram(l, k) = gram[k][l];
    }
  }
  return rec;
}

}  // namespace

double bridge_exit_probability(double x0, double x1, double barrier, double sigma,
                               double dt) {
  if (!(sigma > 0.0)) throw InvalidInputError("bridge_exit_probability: sigma must be positive");
  if (!(dt > 0.0)) throw InvalidInputError("bridge_exit_probability: dt must be positive");
  const double d0 = barrier - x0;
  const double d1 = barrier - x1;
  if (d0 * d1 < 0.0)
    throw InvalidInputError(
        "bridge_exit_probability: endpoints must lie on the same side of the barrier");
  const double exponent = -2.0 * d0 * d1 / (sigma * sigma * dt);
  if (exponent >= 0.0) return 1.0;  // an endpoint touches the barrier
  return std::exp(exponent);
}

TrajectoryRecord simulate_path(const ProblemSpec& spec, const CoeffVector& a,
                               RngStream stream) {
  const int d = spec.dimension;
  const int nb = spec.n_basis();
  if (a.size() != nb)
    throw InvalidInputError("simulate_path: coefficient length must match basis size");

  const double dt = spec.dt;
  const double sqrt_dt = std::sqrt(dt);
  const std::int64_t max_steps =
      static_cast<std::int64_t>(std::ceil(spec.t_max / dt - 1e-9));

  const bool constant_diffusion = spec.diffusion.is_constant();
  DiffusionData diff;
  if (constant_diffusion) {
    diff = decompose_diffusion(spec.diffusion(0.0, spec.initial_state), spec.svd_rel_tol);
  }

  const bool has_running_cost = !spec.running_cost.is_zero();

  SampleRng rng(stream.seed, stream.sample_index);

  if (constant_diffusion && d <= kFastMaxDim && nb <= kFastMaxBasis) {
    return simulate_path_fast(spec, a, rng, diff, max_steps);
  }

  // Workspaces; all heap traffic happens here, never inside the stepping loop.
  Eigen::VectorXd x = spec.initial_state;
  Eigen::VectorXd x_new(d);
  Eigen::VectorXd gval(d);
  Eigen::VectorXd db(d);
  Eigen::MatrixXd bvals(d, nb);      // column k = b_k(t, x); columns are contiguous
  Eigen::MatrixXd fpb(d, nb);        // column k = f^+ b_k
  Eigen::MatrixXd fftb(d, nb);       // column k = (f f^T)^+ b_k
  Eigen::VectorXd face_p(2 * d);     // bridge crossing probabilities, (lo, hi) per axis

  TrajectoryRecord rec;
  rec.m = Eigen::VectorXd::Zero(nb);
  rec.gram = Eigen::MatrixXd::Zero(nb, nb);
  rec.exit_state = x;

  double phi_run = 0.0;
  std::int64_t step = 0;
  bool exited = false;

  while (step < max_steps) {
    const double t = static_cast<double>(step) * dt;

    if (!constant_diffusion) {
      diff = decompose_diffusion(spec.diffusion(t, x), spec.svd_rel_tol);
    }

    spec.drift.eval(t, x.data(), gval.data());
    for (int k = 0; k < nb; ++k) {
      spec.basis[static_cast<std::size_t>(k)].field.eval(t, x.data(),
                                                         bvals.col(k).data());
    }
    if (has_running_cost) phi_run += spec.running_cost(t, x.data(), d) * dt;

    for (int j = 0; j < d; ++j) db(j) = sqrt_dt * rng.gaussian();

    fpb.noalias() = diff.f_pinv * bvals;
    fftb.noalias() = diff.fft_pinv * bvals;
    rec.m.noalias() += fpb.transpose() * db;
    rec.gram.noalias() += dt * (bvals.transpose() * fftb);

    // x' = x + (g + sum_k a_k b_k) dt + f dB
    x_new = x + gval * dt + diff.f * db;
    x_new.noalias() += dt * (bvals * a);

    if (!x_new.allFinite())
      throw SimulationDivergedError(static_cast<std::size_t>(step));

    ++step;

    if (!spec.domain.contains(x_new.data(), d)) {
      rec.exit_state = x_new;
      exited = true;
      break;
    }

    if (spec.bridge) {
      // Probability any coordinate's bridge touched a face during this step.
      double survival = 1.0;
      double p_total = 0.0;
      for (int j = 0; j < d; ++j) {
        const double sigma = diff.face_sigma(j);
        face_p(2 * j) = 0.0;
        face_p(2 * j + 1) = 0.0;
        if (!(sigma > 0.0)) continue;
        const double denom = sigma * sigma * dt;
        const double e_lo =
            -2.0 * (x(j) - spec.domain.lo(j)) * (x_new(j) - spec.domain.lo(j)) / denom;
        const double e_hi =
            -2.0 * (spec.domain.hi(j) - x(j)) * (spec.domain.hi(j) - x_new(j)) / denom;
        if (e_lo > kBridgeExponentFloor) face_p(2 * j) = std::exp(e_lo);
        if (e_hi > kBridgeExponentFloor) face_p(2 * j + 1) = std::exp(e_hi);
        survival *= (1.0 - face_p(2 * j)) * (1.0 - face_p(2 * j + 1));
        p_total += face_p(2 * j) + face_p(2 * j + 1);
      }
      const double p_exit = 1.0 - survival;
      if (p_exit > 0.0) {
        const double u = rng.uniform01();
        if (u < p_exit) {
          // Attribute the crossing to a face, proportionally to its probability.
          const double u_face = (u / p_exit) * p_total;
          double cum = 0.0;
          int face = 0;
          for (int jf = 0; jf < 2 * d; ++jf) {
            cum += face_p(jf);
            face = jf;
            if (u_face <= cum) break;
          }
          rec.exit_state = x_new;
          const int axis = face / 2;
          rec.exit_state(axis) =
              (face % 2 == 0) ? spec.domain.lo(axis) : spec.domain.hi(axis);
          exited = true;
          break;
        }
      }
    }

    x = x_new;
  }

  rec.n_steps = step;
  rec.tau = static_cast<double>(step) * dt;
  if (!exited) {
    rec.exit_state = x;
    rec.censored = !spec.horizon_is_exit;
  }
  rec.phi = phi_run + spec.terminal_cost(rec.tau, rec.exit_state.data(), d);
  return rec;
}

std::vector<TrajectoryRecord> simulate_records(const ProblemSpec& spec,
                                               const CoeffVector& a, std::int64_t n,
                                               std::uint64_t seed, int threads) {
  spec.validate();
  if (n < 1) throw InvalidInputError("simulate_records: need at least one sample");
  const int workers = resolve_threads(threads);

  std::vector<TrajectoryRecord> records(static_cast<std::size_t>(n));
  auto fill_range = [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      records[static_cast<std::size_t>(i)] =
          simulate_path(spec, a, RngStream{seed, static_cast<std::uint64_t>(i)});
    }
  };

  if (workers <= 1 || n == 1) {
    fill_range(0, n);
    return records;
  }

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t begin = static_cast<std::int64_t>(w) * chunk;
    const std::int64_t end = std::min<std::int64_t>(begin + chunk, n);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        fill_range(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return records;
}

double exponential_martingale(const TrajectoryRecord& rec, const CoeffVector& v) {
  if (v.size() != rec.m.size())
    throw InvalidInputError("exponential_martingale: coefficient length mismatch");
  const double exponent = v.dot(rec.m) - 0.5 * v.dot(rec.gram * v);
  if (exponent > 709.0) {
    throw EstimatorUnusableError("exponential_martingale: exponent " +
                                 std::to_string(exponent) + " would overflow");
  }
  return std::exp(exponent);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GIRSANOV_GRAD_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  return 1;
}

void write_records_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records) {
  if (records.empty()) return;
  const Eigen::Index nb = records.front().m.size();
  os << "tau,censored,phi";
  for (Eigen::Index k = 0; k < nb; ++k) os << ",m_" << k;
  for (Eigen::Index k = 0; k < nb; ++k)
    for (Eigen::Index l = k; l < nb; ++l) os << ",gram_" << k << "_" << l;
  os << "\n";
  os << std::setprecision(17);
  for (const TrajectoryRecord& rec : records) {
    os << rec.tau << "," << (rec.censored ? 1 : 0) << "," << rec.phi;
    for (Eigen::Index k = 0; k < nb; ++k) os << "," << rec.m(k);
    for (Eigen::Index k = 0; k < nb; ++k)
      for (Eigen::Index l = k; l < nb; ++l) os << "," << rec.gram(k, l);
    os << "\n";
  }
}

}  // namespace girsanov
