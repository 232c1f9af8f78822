#include <benchmark/benchmark.h>

#include <omp.h>

#include "vlroute/sweep.hpp"

namespace {

vlroute::SweepSpec bench_spec(int seeds) {
  vlroute::SweepSpec s;
  s.base.topology.rows = 6;
  s.base.topology.cols = 6;
  s.base.topology.area_side = 15.0;
  s.base.packets_per_session = 40;
  s.base.duration_cap_s = 1.0;
  s.param = vlroute::SweptParam::Sessions;
  s.values = {2, 6};
  s.seeds = seeds;
  return s;
}

void BM_SweepSerial(benchmark::State& state) {
  const auto spec = bench_spec(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(vlroute::run_sweep_serial(spec));
  state.counters["runs"] = static_cast<double>(spec.values.size() * spec.protocols.size() * spec.seeds);
}

void BM_SweepParallel(benchmark::State& state) {
  const auto spec = bench_spec(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(vlroute::run_sweep(spec));
  state.counters["runs"] = static_cast<double>(spec.values.size() * spec.protocols.size() * spec.seeds);
  state.counters["threads"] = omp_get_max_threads();
}

}  // namespace

BENCHMARK(BM_SweepSerial)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SweepParallel)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
