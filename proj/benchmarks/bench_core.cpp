#include <benchmark/benchmark.h>

#include "ftobs/fusion.hpp"
#include "ftobs/kernel.hpp"
#include "ftobs/observer.hpp"
#include "ftobs/presets.hpp"
#include "ftobs/simnet.hpp"

using namespace ftobs;

static void BM_FilterBankStep(benchmark::State& state) {
  const int order = static_cast<int>(state.range(0));
  observer::FilterBank bank(0, kernel::make_bank(order), Vector::Zero(order));
  const double dt = 1e-4;
  for (auto _ : state) {
    const double t = bank.time();
    bank.step({std::sin(t), std::sin(t + 0.5 * dt), std::sin(t + dt)}, dt);
    benchmark::DoNotOptimize(bank.xi().data());
  }
}
BENCHMARK(BM_FilterBankStep)->Arg(1)->Arg(2)->Arg(5);

static void BM_KernelDiagonal(benchmark::State& state) {
  const kernel::KernelDerivatives kd(kernel::KernelParams(3.0, 1.0, 5), 5);
  double t = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kd.diagonal(5, t));
    t += 1e-6;
  }
}
BENCHMARK(BM_KernelDiagonal);

static void BM_MatrixExponential(benchmark::State& state) {
  const auto s = presets::reference();
  for (auto _ : state) benchmark::DoNotOptimize(numkit::matrix_exponential(s.a, 0.27).data());
}
BENCHMARK(BM_MatrixExponential);

static void BM_DelayWindow(benchmark::State& state) {
  const auto s = presets::reference();
  for (auto _ : state) benchmark::DoNotOptimize(fusion::make_delay_window(s.a, 0.27, 1e-4).peak.data());
}
BENCHMARK(BM_DelayWindow)->Unit(benchmark::kMillisecond);

static void BM_BuildPlan(benchmark::State& state) {
  const auto s = presets::reference();
  for (auto _ : state) benchmark::DoNotOptimize(simnet::build_plan(s).nodes.size());
}
BENCHMARK(BM_BuildPlan)->Unit(benchmark::kMicrosecond);

static void BM_ReferenceRun(benchmark::State& state) {
  simnet::RunOptions o;
  o.t_end = 1.0;
  o.bounds = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(simnet::run(presets::reference(), o).steps);
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_ReferenceRun)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
