#include <benchmark/benchmark.h>

#include "ditto/analysis.hpp"
#include "ditto/rng.hpp"

using namespace ditto;

namespace {

void BM_LinearCka(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  Tensor x(n, 32), y(n, 32);
  for (auto& v : x.data()) v = rng.normal();
  for (auto& v : y.data()) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(linear_cka(x, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_LinearCka)->RangeMultiplier(4)->Range(256, 4096);

}  // namespace
