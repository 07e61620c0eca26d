// Serial reference vs OpenMP kernels at the shapes the denoiser actually hits
// (batch 64, horizon 3, widths 32..256).

#include <benchmark/benchmark.h>

#include <vector>

#include "mtid/kernels.hpp"
#include "mtid/rng.hpp"

using namespace mtid;
using namespace mtid::kernels;

namespace {

std::vector<Scalar> random_vec(std::size_t n) {
  Rng rng(n);
  std::vector<Scalar> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const int n = static_cast<int>(state.range(2));
  auto a = random_vec(static_cast<std::size_t>(m) * k);
  auto b = random_vec(static_cast<std::size_t>(k) * n);
  std::vector<Scalar> c(static_cast<std::size_t>(m) * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      omp::gemm(Transpose::kNo, Transpose::kNo, {m, n, k}, a.data(), b.data(), c.data(), false);
    } else {
      serial::gemm(Transpose::kNo, Transpose::kNo, {m, n, k}, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_GemmTransposedA(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const int n = static_cast<int>(state.range(2));
  auto a = random_vec(static_cast<std::size_t>(m) * k);
  auto b = random_vec(static_cast<std::size_t>(k) * n);
  std::vector<Scalar> c(static_cast<std::size_t>(m) * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      omp::gemm(Transpose::kYes, Transpose::kNo, {m, n, k}, a.data(), b.data(), c.data(), false);
    } else {
      serial::gemm(Transpose::kYes, Transpose::kNo, {m, n, k}, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
}

template <bool Parallel>
void BM_Im2col(benchmark::State& state) {
  const int batch = 64, len = 3, ch = static_cast<int>(state.range(0)), kernel = 3;
  auto x = random_vec(static_cast<std::size_t>(batch) * len * ch);
  std::vector<Scalar> col(static_cast<std::size_t>(batch) * len * kernel * ch);
  for (auto _ : state) {
    if constexpr (Parallel) {
      omp::im2col(x.data(), batch, len, ch, kernel, 1, len, col.data());
    } else {
      serial::im2col(x.data(), batch, len, ch, kernel, 1, len, col.data());
    }
    benchmark::DoNotOptimize(col.data());
  }
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0)), cols = 14;
  auto x = random_vec(static_cast<std::size_t>(rows) * cols);
  for (auto _ : state) {
    auto y = x;
    if constexpr (Parallel) {
      omp::softmax_rows(y.data(), rows, cols);
    } else {
      serial::softmax_rows(y.data(), rows, cols);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Args({192, 96, 32})->Args({192, 384, 128})->Args({192, 768, 128});
BENCHMARK(BM_Gemm<true>)->Args({192, 96, 32})->Args({192, 384, 128})->Args({192, 768, 128});
BENCHMARK(BM_GemmTransposedA<false>)->Args({384, 192, 128});
BENCHMARK(BM_GemmTransposedA<true>)->Args({384, 192, 128});
BENCHMARK(BM_Im2col<false>)->Arg(64)->Arg(128);
BENCHMARK(BM_Im2col<true>)->Arg(64)->Arg(128);
BENCHMARK(BM_Softmax<false>)->Arg(64 * 14)->Arg(1024 * 14);
BENCHMARK(BM_Softmax<true>)->Arg(64 * 14)->Arg(1024 * 14);

BENCHMARK_MAIN();
