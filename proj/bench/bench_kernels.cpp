#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "penex/boosting.hpp"
#include "penex/kernels.hpp"

namespace {

using namespace penex;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(a, b, c, n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Softmax>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 10;
  const auto in = random_vector(rows * cols, 3);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    Softmax(in, out, rows, cols);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_FitStump(benchmark::State& state) {
  const Dataset d = gen_blobs(static_cast<std::size_t>(state.range(0)), 4, 8, 0.8, 5);
  const std::vector<double> w(d.n, 1.0 / d.n);
  const bool parallel = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(fit_stump(d, w, parallel).weighted_error);
}

}  // namespace

BENCHMARK(BM_Gemm<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<kernels::parallel::gemm_nn>)->Name("gemm_nn/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<kernels::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Softmax<kernels::serial::row_softmax>)->Name("softmax/serial")->Arg(4096)->Arg(65536);
BENCHMARK(BM_Softmax<kernels::parallel::row_softmax>)->Name("softmax/parallel")->Arg(4096)->Arg(65536);
BENCHMARK(BM_FitStump)->Args({2000, 0})->Args({2000, 1});

BENCHMARK_MAIN();
