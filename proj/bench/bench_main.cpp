// Serial reference loops against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "ctstl/cli.hpp"

using namespace ctstl;

namespace {

Trajectory long_trajectory(int intervals) {
  Matrix a(2, 2);
  a << 0, 1, -2, -3;  // eigenvalues -1, -2
  Matrix b(2, 1);
  b << 0, 1;
  auto sys = std::make_shared<LinearSystem>(a, b);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> d(-5, 5);
  Trajectory t;
  t.system = sys;
  t.grid = TimeGrid::uniform(0.01 * intervals, intervals);
  const StepMatrices s = step_matrices(*sys, 0.01);
  Vector x(2);
  x << 1, 0;
  t.states.push_back(x);
  for (int k = 0; k < intervals; ++k) {
    Vector u(1);
    u << d(rng);
    t.controls.push_back(u);
    t.states.push_back(s.ad * t.states.back() + s.bd * u);
  }
  return t;
}

Predicate first_state() {
  Predicate p;
  p.row = RowVector(2);
  p.row << 1, 0;
  p.offset = 0.5;
  return p;
}

void BM_WindowMinimaSerial(benchmark::State& state) {
  const Trajectory t = long_trajectory(static_cast<int>(state.range(0)));
  const Predicate p = first_state();
  for (auto _ : state) benchmark::DoNotOptimize(predicate_window_minima_serial(t, p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_WindowMinimaParallel(benchmark::State& state) {
  const Trajectory t = long_trajectory(static_cast<int>(state.range(0)));
  const Predicate p = first_state();
  for (auto _ : state) benchmark::DoNotOptimize(predicate_window_minima(t, p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

struct Solved {
  Encoding enc;
  Solution sol;
  Trajectory traj;
};

const Solved& example1() {
  static const Solved s = [] {
    const Scenario sc = parse_scenario(bundled_text("example1"));
    Encoding enc = build_miqp(sc.problem());
    Solution sol = branch_and_bound(enc.model);
    Trajectory traj = Trajectory::from_solution(enc, sol.values);
    return Solved{std::move(enc), std::move(sol), std::move(traj)};
  }();
  return s;
}

void BM_AuditSerial(benchmark::State& state) {
  const Solved& s = example1();
  for (auto _ : state) benchmark::DoNotOptimize(cbf_bound_report_serial(s.traj, s.enc, s.sol.values));
}

void BM_AuditParallel(benchmark::State& state) {
  const Solved& s = example1();
  for (auto _ : state) benchmark::DoNotOptimize(cbf_bound_report(s.traj, s.enc, s.sol.values));
}

void bnb(benchmark::State& state, bool parallel) {
  const Solved& s = example1();
  BnbOptions o;
  o.parallel = parallel;
  for (auto _ : state) benchmark::DoNotOptimize(branch_and_bound(s.enc.model, o));
}

void BM_BranchAndBoundSerial(benchmark::State& state) { bnb(state, false); }
void BM_BranchAndBoundParallel(benchmark::State& state) { bnb(state, true); }

}  // namespace

BENCHMARK(BM_WindowMinimaSerial)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WindowMinimaParallel)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AuditSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AuditParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BranchAndBoundSerial)->Iterations(3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BranchAndBoundParallel)->Iterations(3)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
