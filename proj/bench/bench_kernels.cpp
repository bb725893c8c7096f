// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "specslice/driver.hpp"
#include "specslice/pencil.hpp"

using namespace specslice;

namespace {

MatrixPencil bench_pencil(Index n) {
  SyntheticSpectrumSpec s;
  s.clusters = {{-5.0, 1.0, n / 4}, {3.0, 2.0, n / 2}};
  s.b_mode = BMode::random_spd;
  s.condition_target = 10.0;
  s.basis_rotation_seed = 1;
  return synth_pencil(s, n, 7).pencil;
}

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

void BM_solve_ldlt(benchmark::State& st) {
  const Index n = st.range(0);
  const auto p = bench_pencil(n);
  const auto f = factor_ldlt(shifted(p.a(), p.b(), -4.9));
  const Matrix rhs = gaussian(n, 64, 3);
  for (auto _ : st) benchmark::DoNotOptimize(solve_ldlt(f, rhs));
}

void BM_solve_ldlt_reference(benchmark::State& st) {
  const Index n = st.range(0);
  const auto p = bench_pencil(n);
  const auto f = factor_ldlt(shifted(p.a(), p.b(), -4.9));
  const Matrix rhs = gaussian(n, 64, 3);
  for (auto _ : st) benchmark::DoNotOptimize(solve_ldlt_reference(f, rhs));
}

void BM_evaluate_grid(benchmark::State& st) {
  const auto m = estimate_dos(bench_pencil(400), 100, 5);
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_grid(m, -8.0, 7.0, st.range(0)));
}

void BM_evaluate_grid_reference(benchmark::State& st) {
  const auto m = estimate_dos(bench_pencil(400), 100, 5);
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_grid_reference(m, -8.0, 7.0, st.range(0)));
}

struct RoundSetup {
  MatrixPencil pencil;
  std::vector<ProbeTask> tasks;
  ProbeConfig cfg;
};

RoundSetup round_setup(Index n) {
  RoundSetup r{bench_pencil(n), {}, {}};
  for (int j = 0; j < 8; ++j) r.tasks.push_back({j, -6.0 + 0.3 * j, nullptr});
  r.cfg.basis_dim = 30;
  r.cfg.subspace_iters = 4;
  return r;
}

void BM_probe_round(benchmark::State& st) {
  const auto r = round_setup(st.range(0));
  std::vector<int> ids;
  for (const auto& t : r.tasks) ids.push_back(t.probe_id);
  const auto sched = schedule_probes(ids, static_cast<int>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(run_probe_round(r.pencil, r.tasks, sched, r.cfg, 1, 0, 10.0));
}

void BM_probe_round_reference(benchmark::State& st) {
  const auto r = round_setup(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(run_probe_round_reference(r.pencil, r.tasks, r.cfg, 1, 0, 10.0));
}

}  // namespace

BENCHMARK(BM_solve_ldlt)->Arg(400)->Arg(1200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_solve_ldlt_reference)->Arg(400)->Arg(1200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluate_grid)->Arg(1000)->Arg(20000);
BENCHMARK(BM_evaluate_grid_reference)->Arg(1000)->Arg(20000);
BENCHMARK(BM_probe_round)->Args({400, 1})->Args({400, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_probe_round_reference)->Arg(400)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
