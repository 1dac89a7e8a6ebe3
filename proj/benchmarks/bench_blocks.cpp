#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "viteraser/blocks.hpp"

using namespace viteraser;

namespace {

void block_forward(benchmark::State& state, BlockType type) {
  torch::NoGradGuard ng;
  torch::manual_seed(0);
  const auto res = state.range(0);
  BlockOptions o;
  o.type = type;
  o.dim = 96;
  o.heads = 3;
  o.window_size = 8;
  o.shift = type == BlockType::kPvt ? 0 : 4;
  o.ffn_expansion = 4.0;
  o.sr_ratio = 4;
  auto block = make_block(o);
  auto x = torch::randn({1, res, res, 96});
  for (auto _ : state) benchmark::DoNotOptimize(block->forward_tokens(x));
  state.SetItemsProcessed(state.iterations() * res * res);
}

void BM_SwinBlock(benchmark::State& s) { block_forward(s, BlockType::kSwin); }
void BM_SwinV2Block(benchmark::State& s) { block_forward(s, BlockType::kSwinV2); }
void BM_PvtBlock(benchmark::State& s) { block_forward(s, BlockType::kPvt); }

void BM_WindowPartition(benchmark::State& state) {
  auto x = torch::randn({1, 64, 64, 96});
  for (auto _ : state) benchmark::DoNotOptimize(window_merge(window_partition(x, 8), 64, 64));
}

}  // namespace

BENCHMARK(BM_SwinBlock)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SwinV2Block)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PvtBlock)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WindowPartition)->Unit(benchmark::kMicrosecond);
