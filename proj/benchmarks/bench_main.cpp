#include <benchmark/benchmark.h>

#include "replica_es/geometry.hpp"
#include "replica_es/mc_oracle.hpp"
#include "replica_es/saddle.hpp"
#include "replica_es/special_fn.hpp"

namespace rs = replica_es;

namespace {

void bm_special_fn(benchmark::State& state) {
  double x = -6.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rs::g(x) + rs::g_prime(x) + rs::phi(x) + rs::psi(x) + rs::w_fn(x));
    x = x > 6.0 ? -6.0 : x + 1e-3;
  }
}
BENCHMARK(bm_special_fn);

void bm_solve_reduced(benchmark::State& state) {
  const rs::ProblemParams p{0.975, 0.1, state.range(0) * 1e-2};
  for (auto _ : state) benchmark::DoNotOptimize(rs::solve_reduced(p).q0);
}
BENCHMARK(bm_solve_reduced)->Arg(0)->Arg(1)->Arg(5);

void bm_trace_iso_q0(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(rs::trace_iso_q0(1.25, 0.01, {0.6, 0.995}).points.size());
}
BENCHMARK(bm_trace_iso_q0)->Unit(benchmark::kMillisecond);

void bm_trace_r_of_eta(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(rs::trace_r_of_eta(0.975, 1.05, {1e-4, 10.0}).points.size());
}
BENCHMARK(bm_trace_r_of_eta)->Unit(benchmark::kMillisecond);

void bm_solve_program(benchmark::State& state) {
  rs::MCConfig cfg;
  cfg.n_assets = static_cast<int>(state.range(0));
  cfg.n_obs = 5 * cfg.n_assets;
  const auto x = rs::sample_instance(cfg, 0);
  for (auto _ : state) benchmark::DoNotOptimize(rs::solve_program(x, cfg.alpha, cfg.eta).objective);
}
BENCHMARK(bm_solve_program)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
