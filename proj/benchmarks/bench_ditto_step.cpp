#include <benchmark/benchmark.h>

#include "ditto/adaptation.hpp"
#include "ditto/synthetic.hpp"

using namespace ditto;

namespace {

struct Fixture {
  DomainDataset data = generate_synthetic(rotation_ladder({15, 30, 45, 60}, 512, 512, 0, 64), 1);
  Optimizers opt;
  Batch batch;
  LanguagePrior prior = LanguagePrior::uniform(data.target_ids());

  Fixture() {
    opt.task.lr = 2e-3;
    opt.task.total_steps = 1 << 30;
    opt.discriminator = opt.task;
    opt.discriminator.lr = 1e-2;
    std::vector<std::size_t> idx(32);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const LabeledSet s = data.source_labeled.subset(idx);
    batch = {s.x, s.y};
  }
};

void BM_BaselineStep(benchmark::State& state) {
  Fixture f;
  Rng rng(3);
  ModelBundle b = ModelBundle::init(EncoderSpec{}, 3, f.data.target_ids(), rng);
  const auto v = TrainVariant::make(VariantKind::Baseline);
  std::int64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(baseline_step(b, f.batch, f.opt, v, step++));
}
BENCHMARK(BM_BaselineStep);

// Full joint step: SAM's two task passes plus the adversarial pass.
void BM_DittoStep(benchmark::State& state) {
  Fixture f;
  Rng rng(3);
  ModelBundle b = ModelBundle::init(EncoderSpec{}, 3, f.data.target_ids(), rng);
  const auto v = TrainVariant::make(VariantKind::Ditto);
  std::int64_t step = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ditto_step(b, f.batch, f.prior, f.data, f.opt, v, rng, step++).task_loss);
  }
}
BENCHMARK(BM_DittoStep);

}  // namespace
