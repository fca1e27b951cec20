#include <benchmark/benchmark.h>

#include <random>

#include "edgeinfer/engine.hpp"
#include "edgeinfer/fixtures.hpp"
#include "edgeinfer/quantizer.hpp"

using namespace edgeinfer;

namespace {

Tensor random_input(std::int64_t batch, std::int64_t size, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(batch * size * size * 3));
  for (auto& x : v) x = d(rng);
  return Tensor::from_f32({batch, size, size, 3}, std::move(v));
}

const VariantSet& variants() {
  static const VariantSet set = [] {
    const auto b = micro_mobilenet({.seed = 1});
    std::vector<Tensor> calib;
    for (unsigned i = 0; i < 8; ++i) calib.push_back(random_input(1, b.meta.preprocess.height, i));
    return make_variants(b, calib, {.threads = 1});
  }();
  return set;
}

const ModelBundle& original() {
  static const ModelBundle b = micro_mobilenet({.seed = 1});
  return b;
}

// state.range(0): 0 fp32, 1 fp32opt, 2 fp16, 3 int8; range(1): batch.
void BM_Forward(benchmark::State& state) {
  const ModelBundle* bundles[] = {&original(), &variants().fp32opt, &variants().fp16, &variants().int8};
  const auto& b = *bundles[state.range(0)];
  const auto x = random_input(state.range(1), b.meta.preprocess.height, 42);
  for (auto _ : state) benchmark::DoNotOptimize(run_outputs(b, x));
  state.SetLabel(b.meta.variant);
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_Forward)->ArgsProduct({{0, 1, 2, 3}, {1, 8}})->Unit(benchmark::kMillisecond);

}  // namespace
