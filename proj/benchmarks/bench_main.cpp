#include <benchmark/benchmark.h>

#include "oodmark/model.hpp"
#include "oodmark/surrogate.hpp"
#include "oodmark/synth.hpp"
#include "oodmark/trigger.hpp"

namespace {

using namespace oodmark;

void BM_ForwardPass(benchmark::State& state) {
  Classifier model = build_model("small_conv", 10, 1);
  model.set_train(false);
  Tensor batch({static_cast<int>(state.range(0)), 3, 32, 32});
  Rng rng(2);
  for (auto& v : batch.data) v = rng.uniform();
  for (auto _ : state) {
    Tensor out = model.forward(batch);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardPass)->Arg(1)->Arg(32)->Arg(128);

void BM_GeneratePatch(benchmark::State& state) {
  const SourceImage src = make_texture_source(3);
  AugmentConfig cfg;
  cfg.seed = 5;
  uint64_t i = 0;
  for (auto _ : state) {
    Image patch = generate_patch(src, cfg, i++);
    benchmark::DoNotOptimize(patch.pixels.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_GeneratePatch);

void BM_ApplyTriggerBatch(benchmark::State& state) {
  const TriggerSpec trig = make_trigger("trojan_wm", 32, 32, 0);
  Tensor batch({static_cast<int>(state.range(0)), 3, 32, 32});
  Rng rng(7);
  for (auto& v : batch.data) v = rng.uniform();
  for (auto _ : state) {
    Tensor copy = batch;
    apply_trigger_batch(copy, trig);
    benchmark::DoNotOptimize(copy.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ApplyTriggerBatch)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
