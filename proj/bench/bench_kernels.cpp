// Serial reference vs OpenMP kernels. Set CNLS_NUM_THREADS or OMP_NUM_THREADS
// to choose the thread count of the parallel variants.
#include <benchmark/benchmark.h>

#include <random>

#include "cnls/algebra.hpp"
#include "cnls/kernels.hpp"
#include "cnls/spectral.hpp"

namespace {

const cnls::cplx kMinusI{0.0, -1.0};

cnls::SystemSpec example21() {
  const std::vector<cnls::cplx> p{kMinusI, kMinusI, 1.0, 1.0};
  return cnls::builtin_example("example21", p);
}

cnls::ComplexMatrix random_columns(std::size_t rows, std::size_t cols) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 0.05);
  cnls::ComplexMatrix z(rows, cols);
  for (auto& v : z.data()) v = {g(rng), g(rng)};
  return z;
}

template <bool Parallel>
void BM_rk4_columns(benchmark::State& state) {
  const auto spec = example21();
  const auto z0 = random_columns(2, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto z = z0;
    const bool ok = Parallel ? cnls::kernels::rk4_columns(z, spec.nonlinearity, 0.01, 4)
                             : cnls::kernels::rk4_columns_serial(z, spec.nonlinearity, 0.01, 4);
    benchmark::DoNotOptimize(ok);
    benchmark::DoNotOptimize(z.data().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_scan_sphere(benchmark::State& state) {
  const auto spec = example21();
  const auto a = cnls::HermitianForm::identity(2);
  for (auto _ : state) {
    const auto scan = Parallel ? cnls::kernels::scan_sphere(spec.nonlinearity, a, state.range(0), 0, 10)
                               : cnls::kernels::scan_sphere_serial(spec.nonlinearity, a, state.range(0), 0, 10);
    benchmark::DoNotOptimize(scan.min_value);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_free_propagator(benchmark::State& state) {
  const auto grid = cnls::make_grid(600.0, static_cast<std::size_t>(state.range(0)));
  const cnls::MassVector masses({1.0, 3.0, 1.0, 3.0});
  const cnls::FreePropagator prop(grid, masses, 0.01);
  auto z = random_columns(4, grid->size());
  const int before = cnls::kernels::max_threads();
  if (!Parallel) cnls::kernels::set_threads(1);
  for (auto _ : state) {
    prop.apply(z);
    benchmark::DoNotOptimize(z.data().data());
  }
  cnls::kernels::set_threads(before);
}

}  // namespace

BENCHMARK(BM_rk4_columns<false>)->Arg(1 << 14)->Arg(1 << 16)->Name("rk4_columns/serial");
BENCHMARK(BM_rk4_columns<true>)->Arg(1 << 14)->Arg(1 << 16)->Name("rk4_columns/parallel");
BENCHMARK(BM_scan_sphere<false>)->Arg(20000)->Arg(200000)->Name("scan_sphere/serial");
BENCHMARK(BM_scan_sphere<true>)->Arg(20000)->Arg(200000)->Name("scan_sphere/parallel");
BENCHMARK(BM_free_propagator<false>)->Arg(1 << 14)->Name("free_propagator/one_thread");
BENCHMARK(BM_free_propagator<true>)->Arg(1 << 14)->Name("free_propagator/parallel");

BENCHMARK_MAIN();
