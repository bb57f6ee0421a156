#include <benchmark/benchmark.h>

#include "pgnn/kernels.hpp"
#include "test_util.hpp"

using namespace pgnn;

namespace
{
  // n x n operand with the given density times n x 64
  template <Matrix (*Kernel)(const Matrix&, const Matrix&)>
  void bm_matmul(benchmark::State& state)
  {
    const auto n = static_cast<std::size_t>(state.range(0));
    const double density = static_cast<double>(state.range(1)) / 1000.0;
    const Matrix a = test::sparse_matrix(n, n, density, 1);
    const Matrix b = test::random_matrix(n, 64, 2);
    for (auto _ : state)
      benchmark::DoNotOptimize(Kernel(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
  }

  template <Matrix (*Kernel)(const Matrix&, const Matrix&)>
  void bm_matmul_tn(benchmark::State& state)
  {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = test::random_matrix(n, 64, 1);
    const Matrix b = test::random_matrix(n, 64, 2);
    for (auto _ : state)
      benchmark::DoNotOptimize(Kernel(a, b));
  }

  void args(benchmark::internal::Benchmark* b)
  {
    for (long n : {512, 2048})
      for (long permille : {2, 1000})
        b->Args({n, permille});
  }
}

BENCHMARK(bm_matmul<kernels::matmul>)->Name("matmul/parallel")->Apply(args)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_matmul<kernels::reference::matmul>)->Name("matmul/reference")->Apply(args)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_matmul_tn<kernels::matmul_tn>)->Name("matmul_tn/parallel")->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_matmul_tn<kernels::reference::matmul_tn>)
  ->Name("matmul_tn/reference")
  ->Arg(512)
  ->Arg(2048)
  ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
