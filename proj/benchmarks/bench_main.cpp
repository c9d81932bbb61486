// Throughput benchmarks for the hot paths: raw counter blocks, variate generation,
// trajectory simulation (per integration step), and the estimator reductions.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "girsanov/estimate.hpp"
#include "girsanov/model.hpp"
#include "girsanov/rng.hpp"
#include "girsanov/simulate.hpp"

namespace {

using namespace girsanov;

void BM_PhiloxBlock(benchmark::State& state) {
  std::array<std::uint32_t, 4> ctr{0, 0, 0, 0};
  const std::array<std::uint32_t, 2> key{0x2a, 0};
  for (auto _ : state) {
    ctr = Philox4x32::block(ctr, key);
    benchmark::DoNotOptimize(ctr);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PhiloxBlock);

void BM_Uniform(benchmark::State& state) {
  SampleRng rng(42, 7);
  double acc = 0.0;
  for (auto _ : state) acc += rng.uniform01();
  benchmark::DoNotOptimize(acc);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Uniform);

void BM_Gaussian(benchmark::State& state) {
  SampleRng rng(42, 7);
  double acc = 0.0;
  for (auto _ : state) acc += rng.gaussian();
  benchmark::DoNotOptimize(acc);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Gaussian);

// Reports integration steps per second; one iteration simulates one trajectory.
void bench_paths(benchmark::State& state, const ProblemSpec& spec,
                 const CoeffVector& a) {
  std::uint64_t sample = 0;
  std::int64_t steps = 0;
  for (auto _ : state) {
    const TrajectoryRecord rec = simulate_path(spec, a, RngStream{99, sample++});
    steps += rec.n_steps;
    benchmark::DoNotOptimize(rec.phi);
  }
  state.SetItemsProcessed(steps);
}

void BM_PathBrownianExit(benchmark::State& state) {
  const ProblemSpec spec = make_brownian_exit(1.0);
  bench_paths(state, spec, CoeffVector::Constant(1, 1.0));
}
BENCHMARK(BM_PathBrownianExit);

void BM_PathBrownianExitBridge(benchmark::State& state) {
  ProblemSpec spec = make_brownian_exit(1.0);
  spec.bridge = true;
  bench_paths(state, spec, CoeffVector::Constant(1, 1.0));
}
BENCHMARK(BM_PathBrownianExitBridge);

void BM_PathDoubleWell(benchmark::State& state) {
  const ProblemSpec spec = make_double_well();
  CoeffVector a(3);
  a << 0.2, -0.1, 0.15;
  bench_paths(state, spec, a);
}
BENCHMARK(BM_PathDoubleWell);

// A state-dependent diffusion falls off the constant-coefficient fast path and
// exercises the general integrator.
void BM_PathGeneralDiffusion(benchmark::State& state) {
  ProblemSpec spec = make_brownian_exit(1.0);
  spec.diffusion = MatrixField::custom(1, [](double, const Eigen::VectorXd& x) {
    return Eigen::MatrixXd::Constant(1, 1, 1.0 + 0.1 * x(0) * x(0));
  });
  spec.validate();
  bench_paths(state, spec, CoeffVector::Constant(1, 1.0));
}
BENCHMARK(BM_PathGeneralDiffusion);

void BM_EstimateHessian(benchmark::State& state) {
  const ProblemSpec spec = make_double_well();
  CoeffVector a(3);
  a << 0.2, -0.1, 0.15;
  const std::vector<TrajectoryRecord> records = simulate_records(spec, a, 4000, 7, 0);
  for (auto _ : state) {
    const DerivativeEstimate hess = estimate_hessian(records, spec.lambda, a);
    benchmark::DoNotOptimize(hess.values(0, 0));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(records.size()));
}
BENCHMARK(BM_EstimateHessian);

void BM_ExponentialMartingale(benchmark::State& state) {
  const ProblemSpec spec = make_double_well();
  CoeffVector a(3);
  a << 0.2, -0.1, 0.15;
  const std::vector<TrajectoryRecord> records = simulate_records(spec, a, 512, 7, 0);
  std::size_t i = 0;
  double acc = 0.0;
  for (auto _ : state) {
    acc += exponential_martingale(records[i], a);
    i = (i + 1) % records.size();
  }
  benchmark::DoNotOptimize(acc);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ExponentialMartingale);

}  // namespace

BENCHMARK_MAIN();
