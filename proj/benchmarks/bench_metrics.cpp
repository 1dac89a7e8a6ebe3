#include <benchmark/benchmark.h>

#include <random>

#include "viteraser/metrics.hpp"

using namespace viteraser;

namespace {

std::pair<Image8, Image8> image_pair(std::int64_t size) {
  Image8 a(size, size, 3), b(size, size, 3);
  std::mt19937 gen(1);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    a.pixels[i] = static_cast<std::uint8_t>(gen() % 256);
    b.pixels[i] = static_cast<std::uint8_t>(std::min<int>(255, a.pixels[i] + static_cast<int>(gen() % 40)));
  }
  return {a, b};
}

void BM_Psnr(benchmark::State& state) {
  auto [a, b] = image_pair(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(psnr(a, b));
}

void BM_Mssim(benchmark::State& state) {
  auto [a, b] = image_pair(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mssim(a, b));
}

void BM_GrayErrors(benchmark::State& state) {
  auto [a, b] = image_pair(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(age_peps_pceps(a, b));
}

}  // namespace

BENCHMARK(BM_Psnr)->Arg(512)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Mssim)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GrayErrors)->Arg(512)->Unit(benchmark::kMillisecond);
