#include <benchmark/benchmark.h>

#include <random>

#include "edgeinfer/kernels.hpp"

using namespace edgeinfer;

namespace {

std::vector<float> random_floats(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<std::int8_t> random_i8(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(-127, 127);
  std::vector<std::int8_t> v(n);
  for (auto& x : v) x = static_cast<std::int8_t>(d(rng));
  return v;
}

// 3x3 conv, stride 1, SAME, on an (1, S, S, C) input with C output channels.
void BM_Conv2D(benchmark::State& state) {
  const auto s = state.range(0), c = state.range(1);
  const Shape xs{1, s, s, c}, ks{3, 3, c, c}, os{1, s, s, c};
  const auto x = random_floats(static_cast<std::size_t>(s * s * c), 1);
  const auto k = random_floats(static_cast<std::size_t>(9 * c * c), 2);
  const kernels::ConvParams p{{1, 1}, Padding::kSame};
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d(x, xs, k, ks, p, os));
  state.SetItemsProcessed(state.iterations() * s * s * c * c * 9);
}
BENCHMARK(BM_Conv2D)->Args({32, 16})->Args({16, 64});

void BM_Conv2DInt8(benchmark::State& state) {
  const auto s = state.range(0), c = state.range(1);
  const Shape xs{1, s, s, c}, ks{3, 3, c, c}, os{1, s, s, c};
  const auto x = random_i8(static_cast<std::size_t>(s * s * c), 1);
  const auto k = random_i8(static_cast<std::size_t>(9 * c * c), 2);
  const std::vector<float> scales(static_cast<std::size_t>(c), 0.01f);
  const kernels::ConvParams p{{1, 1}, Padding::kSame};
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_i8(x, xs, 0.02f, k, ks, scales, p, os, 0.05f));
  state.SetItemsProcessed(state.iterations() * s * s * c * c * 9);
}
BENCHMARK(BM_Conv2DInt8)->Args({32, 16})->Args({16, 64});

void BM_Depthwise(benchmark::State& state) {
  const auto s = state.range(0), c = state.range(1);
  const Shape xs{1, s, s, c}, ks{3, 3, c, 1}, os{1, s, s, c};
  const auto x = random_floats(static_cast<std::size_t>(s * s * c), 3);
  const auto k = random_floats(static_cast<std::size_t>(9 * c), 4);
  const kernels::ConvParams p{{1, 1}, Padding::kSame};
  for (auto _ : state) benchmark::DoNotOptimize(kernels::depthwise_conv2d(x, xs, k, ks, p, os));
}
BENCHMARK(BM_Depthwise)->Args({32, 32})->Args({16, 128});

void BM_MatMul(benchmark::State& state) {
  const auto m = state.range(0), n = state.range(1);
  const auto a = random_floats(static_cast<std::size_t>(m * n), 5);
  const auto b = random_floats(static_cast<std::size_t>(n * n), 6);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::matmul(a, {m, n}, b, {n, n}));
}
BENCHMARK(BM_MatMul)->Args({32, 128})->Args({1, 1024});

void BM_Relu6(benchmark::State& state) {
  const auto x = random_floats(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::relu6(x));
}
BENCHMARK(BM_Relu6)->Arg(1 << 16);

}  // namespace
