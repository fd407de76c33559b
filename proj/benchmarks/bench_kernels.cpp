#include <benchmark/benchmark.h>

#include "hybens/dynamics.hpp"
#include "hybens/measurement.hpp"

namespace {

using namespace hybens;

GridPtr grid_2d(int n) {
  return Grid::make({Axis{"q", -8.0, 8.0, n, Boundary::clamped},
                     Axis{"x", -8.0, 8.0, n, Boundary::clamped}});
}

EnsembleState gaussian_2d(const GridPtr& g) {
  return make_state(g, GaussianSpec::single({0.0, 1.0}, {1.0, 1.0}, {0.3, -0.2}), 0.0);
}

void BM_gradient(benchmark::State& state) {
  const auto g = grid_2d(static_cast<int>(state.range(0)));
  const EnsembleState s = gaussian_2d(g);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gradient(s.P, 0));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_gradient)->RangeMultiplier(2)->Range(32, 256)->Complexity();

void BM_laplacian(benchmark::State& state) {
  const auto g = grid_2d(static_cast<int>(state.range(0)));
  const EnsembleState s = gaussian_2d(g);
  for (auto _ : state) {
    benchmark::DoNotOptimize(laplacian(s.P));
  }
}
BENCHMARK(BM_laplacian)->RangeMultiplier(2)->Range(32, 256);

void BM_rk4_step_hybrid(benchmark::State& state) {
  const auto g = grid_2d(static_cast<int>(state.range(0)));
  const EnsembleState s = gaussian_2d(g);
  const auto spec = HamiltonianSpec::hybrid(
      1.0, 10.0, 1.0, PotentialSpec::linear_coupling(0.2, 0, 1),
      {Sector::quantum, Sector::classical});
  const double dt = stable_dt(spec, s);
  for (auto _ : state) {
    benchmark::DoNotOptimize(step(spec, s, dt, Scheme::rk4));
  }
}
BENCHMARK(BM_rk4_step_hybrid)->RangeMultiplier(2)->Range(32, 256);

void BM_shift_interpolate(benchmark::State& state) {
  const auto g = grid_2d(static_cast<int>(state.range(0)));
  const EnsembleState s = gaussian_2d(g);
  for (auto _ : state) {
    benchmark::DoNotOptimize(impulsive_position_measurement(s, 0.7, 0, 1));
  }
}
BENCHMARK(BM_shift_interpolate)->RangeMultiplier(2)->Range(32, 256);

void BM_density_operator(benchmark::State& state) {
  const auto g = grid_2d(static_cast<int>(state.range(0)));
  const EnsembleState s = gaussian_2d(g);
  const std::vector<int> classical{1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(conditional_density_operator(s, 1.0, classical));
  }
}
BENCHMARK(BM_density_operator)->RangeMultiplier(2)->Range(32, 128);

}  // namespace

BENCHMARK_MAIN();
