#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "viteraser/config.hpp"
#include "viteraser/data.hpp"
#include "viteraser/model.hpp"

using namespace viteraser;

namespace {

void BM_NanoInference(benchmark::State& state) {
  torch::NoGradGuard ng;
  torch::manual_seed(0);
  ViTEraser model(preset("nano"));
  model->eval();
  auto x = torch::rand({state.range(0), 3, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(x).image);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_NanoTrainingForwardBackward(benchmark::State& state) {
  torch::manual_seed(0);
  ViTEraser model(preset("nano"));
  model->train();
  auto x = torch::rand({4, 3, 64, 64});
  for (auto _ : state) {
    auto out = model->forward(x, /*auxiliary=*/true);
    (out.image.mean() + out.aux->mask.mean()).backward();
  }
}

void BM_SynthSample(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(synth_sample(seed++, state.range(0)).input);
}

}  // namespace

BENCHMARK(BM_NanoInference)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NanoTrainingForwardBackward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SynthSample)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
