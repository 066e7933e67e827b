#include <benchmark/benchmark.h>

#include "ditto/autodiff.hpp"
#include "ditto/rng.hpp"

using namespace ditto;

namespace {

Tensor filled(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

void BM_MatmulRaw(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = filled(n, n, rng), b = filled(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_raw(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_MatmulRaw)->RangeMultiplier(2)->Range(16, 128);

// Forward + backward of one tape matmul followed by a reduction.
void BM_MatmulTapeBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  ParamStore ps;
  Parameter& w = ps.add("w", filled(n, n, rng));
  const Tensor x = filled(32, n, rng);
  for (auto _ : state) {
    Tape t;
    t.backward(sum(matmul(t.constant(x), t.param(w))));
    benchmark::DoNotOptimize(w.grad.data().data());
  }
}
BENCHMARK(BM_MatmulTapeBackward)->Arg(32)->Arg(64);

}  // namespace
