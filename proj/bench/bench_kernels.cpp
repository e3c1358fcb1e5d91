// Serial vs OpenMP kernels and full solves over batch sizes.

#include <benchmark/benchmark.h>

#include <random>

#include "batchopt/batch_solver.hpp"
#include "batchopt/kernels.hpp"
#include "batchopt/oracle.hpp"

using namespace batchopt;

namespace {

constexpr int kN = 100, kM = 10;

Eigen::MatrixXd noise(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

kernels::Backend backend(const benchmark::State& st) {
  return st.range(0) == 0 ? kernels::Backend::Serial : kernels::Backend::OpenMP;
}

void set_label(benchmark::State& st) {
  st.SetLabel(st.range(0) == 0 ? "serial" : "omp");
}

void BM_ObstacleUpdate(benchmark::State& st) {
  const auto& k = kernels::kernel_table(backend(st));
  const int l = static_cast<int>(st.range(1));
  const Eigen::MatrixXd x = noise(kN, l, 1), y = noise(kN, l, 2);
  const Eigen::VectorXd xi_x = noise(kM * kN, 1, 3), xi_y = noise(kM * kN, 1, 4);
  Eigen::MatrixXd alpha, d, sx, sy;
  Eigen::VectorXd q;
  for (auto _ : st) {
    k.obstacle_update(x, y, xi_x, xi_y, {5.6, 3.1}, alpha, d, sx, sy, q);
    benchmark::DoNotOptimize(q.data());
  }
  set_label(st);
}

void BM_BlockNorms(benchmark::State& st) {
  const auto& k = kernels::kernel_table(backend(st));
  const int l = static_cast<int>(st.range(1));
  const Eigen::MatrixXd x = noise(kN, l, 1), y = noise(kN, l, 2), xd = noise(kN, l, 3),
                        yd = noise(kN, l, 4), xdd = noise(kN, l, 5), ydd = noise(kN, l, 6),
                        psi = noise(kN, l, 7), aa = noise(kN, l, 8), da = noise(kN, l, 9),
                        v = noise(kN, l, 10), alpha = noise(kM * kN, l, 11),
                        d = noise(kM * kN, l, 12);
  const Eigen::VectorXd xi_x = noise(kM * kN, 1, 13), xi_y = noise(kM * kN, 1, 14);
  Eigen::VectorXd ro, ra, rn;
  for (auto _ : st) {
    k.block_norms(x, y, xd, yd, xdd, ydd, psi, xi_x, xi_y, {5.6, 3.1}, alpha, d, aa, da, v, ro, ra,
                  rn);
    benchmark::DoNotOptimize(rn.data());
  }
  set_label(st);
}

void BM_HeadingAndAccel(benchmark::State& st) {
  const auto& k = kernels::kernel_table(backend(st));
  const int l = static_cast<int>(st.range(1));
  const Eigen::MatrixXd a = noise(kN, l, 1), b = noise(kN, l, 2);
  Eigen::MatrixXd th, al, da;
  for (auto _ : st) {
    k.heading_targets(a, b, th);
    k.accel_polar(a, b, 4.0, al, da);
    benchmark::DoNotOptimize(da.data());
  }
  set_label(st);
}

// Fixed 20 iterations so every size does the same amount of work per instance.
void BM_Solve(benchmark::State& st) {
  SolverOptions o;
  o.backend = backend(st);
  const BatchSolver solver(build_basis(build_time_grid(0.0, 10.0, kN), 10), kM, 1.0, o);
  std::mt19937_64 rng(5);
  const ProblemBatch batch = oracle::random_batch(solver, static_cast<int>(st.range(1)), rng);
  for (auto _ : st) {
    SolveResult r = solver.solve(batch, nullptr, 20, 0.0);
    benchmark::DoNotOptimize(r.state.c_x.data());
  }
  set_label(st);
  st.counters["instances"] = static_cast<double>(st.range(1));
}

void sizes(benchmark::internal::Benchmark* b) {
  for (int be : {0, 1})
    for (int l : {4, 11, 22, 44}) b->Args({be, l});
}

}  // namespace

BENCHMARK(BM_ObstacleUpdate)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BlockNorms)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_HeadingAndAccel)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Solve)->Apply(sizes)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
