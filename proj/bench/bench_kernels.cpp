// Serial reference loops against the OpenMP kernels on generator-sized inputs.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <random>

#include "txsp/expansion.hpp"
#include "txsp/kernels.hpp"
#include "txsp/reference.hpp"
#include "txsp/selfsim.hpp"

namespace {

using namespace txsp;

Tensorf randn(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensorf::randn(s, rng);
}

// range(0) = spatial extent, range(1) = channels
void conv_args(benchmark::internal::Benchmark* b) {
  for (int hw : {16, 32, 64}) b->Args({hw, 16});
  b->Args({32, 64});
}

const ConvSpec kSame{1, PaddingMode::partial(1)};

void BM_conv2d_reference(benchmark::State& st) {
  const int hw = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
  const Tensorf x = randn({1, c, hw, hw}, 1), w = randn({c, c, 3, 3}, 2), b = randn({1, c, 1, 1}, 3);
  for (auto _ : st) benchmark::DoNotOptimize(reference::conv2d(x, w, &b, kSame));
}
void BM_conv2d_kernel(benchmark::State& st) {
  const int hw = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
  const Tensorf x = randn({1, c, hw, hw}, 1), w = randn({c, c, 3, 3}, 2), b = randn({1, c, 1, 1}, 3);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::conv2d(x, w, &b, kSame));
}
BENCHMARK(BM_conv2d_reference)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv2d_kernel)->Apply(conv_args)->Unit(benchmark::kMicrosecond);

void BM_transposed_conv2d_reference(benchmark::State& st) {
  const int hw = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
  const Tensorf x = randn({1, c, hw, hw}, 4), w = randn({c, c, 4, 4}, 5);
  for (auto _ : st) benchmark::DoNotOptimize(reference::transposed_conv2d(x, w, nullptr));
}
void BM_transposed_conv2d_kernel(benchmark::State& st) {
  const int hw = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
  const Tensorf x = randn({1, c, hw, hw}, 4), w = randn({c, c, 4, 4}, 5);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::transposed_conv2d(x, w, nullptr));
}
BENCHMARK(BM_transposed_conv2d_reference)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_transposed_conv2d_kernel)->Apply(conv_args)->Unit(benchmark::kMicrosecond);

// Self-similarity and expansion at encoder levels 3 to 5 of a 128 input.
void map_args(benchmark::internal::Benchmark* b) {
  b->Args({8, 32});
  b->Args({16, 16});
  b->Args({32, 8});
}

void BM_selfsim_reference(benchmark::State& st) {
  const int hw = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
  const Tensorf f = randn({1, c, hw, hw}, 6);
  for (auto _ : st) benchmark::DoNotOptimize(reference::selfsim_naive(f));
}
void BM_selfsim_kernel(benchmark::State& st) {
  const int hw = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
  const Tensorf f = randn({1, c, hw, hw}, 6);
  for (auto _ : st) benchmark::DoNotOptimize(selfsim_fast(f));
}
BENCHMARK(BM_selfsim_reference)->Apply(map_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_selfsim_kernel)->Apply(map_args)->Unit(benchmark::kMicrosecond);

void BM_expansion_reference(benchmark::State& st) {
  const int hw = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
  const Tensorf f = randn({1, c, hw, hw}, 7);
  const Tensorf s = selfsim_fast(f).scores;
  for (auto _ : st) benchmark::DoNotOptimize(reference::paste_accumulate(f, s));
}
void BM_expansion_kernel(benchmark::State& st) {
  const int hw = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
  const Tensorf f = randn({1, c, hw, hw}, 7);
  const Tensorf s = selfsim_fast(f).scores;
  for (auto _ : st) benchmark::DoNotOptimize(expand_via_transposed_conv(f, s));
}
BENCHMARK(BM_expansion_reference)->Apply(map_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_expansion_kernel)->Apply(map_args)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
