#include <benchmark/benchmark.h>

#include <random>

#include "c2f/data.hpp"
#include "c2f/entropy/range_coder.hpp"
#include "c2f/mode_prediction.hpp"
#include "c2f/motion_c2f.hpp"
#include "c2f/pframe.hpp"

using namespace c2f;

namespace {

std::vector<std::pair<uint32_t, uint32_t>> random_intervals(size_t n) {
  std::mt19937 rng(1);
  std::vector<std::pair<uint32_t, uint32_t>> out(n);
  for (auto& [cum, freq] : out) {
    freq = 1 + rng() % 4096;
    cum = rng() % (65536 - freq);
  }
  return out;
}

void BM_RangeEncode(benchmark::State& state) {
  const auto intervals = random_intervals(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    entropy::RangeEncoder enc;
    for (auto [cum, freq] : intervals) enc.encode(cum, freq);
    benchmark::DoNotOptimize(enc.finish());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RangeEncode)->Arg(4096)->Arg(65536);

void BM_RangeDecode(benchmark::State& state) {
  const auto intervals = random_intervals(static_cast<size_t>(state.range(0)));
  entropy::RangeEncoder enc;
  for (auto [cum, freq] : intervals) enc.encode(cum, freq);
  const auto bytes = enc.finish();
  for (auto _ : state) {
    entropy::RangeDecoder dec(bytes);
    for (auto [cum, freq] : intervals) {
      benchmark::DoNotOptimize(dec.peek());
      dec.consume(cum, freq);
    }
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RangeDecode)->Arg(4096)->Arg(65536);

void BM_DeformSample(benchmark::State& state) {
  torch::manual_seed(0);
  const int64_t size = state.range(0);
  auto x = torch::randn({1, 64, size, size});
  auto offsets = torch::randn({1, 2 * 9 * 8, size, size});
  torch::NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(motion::deform_sample(x, offsets, 3, 8));
}
BENCHMARK(BM_DeformSample)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_HamcEncode(benchmark::State& state) {
  torch::manual_seed(1);
  const int64_t c = 64, h = 16, w = 16;
  auto y = torch::randn({1, c, h, w}) * 3;
  modes::EntropyParams params{torch::zeros({1, c, h, w}), torch::rand({1, c, h, w}) * 3 + 0.2};
  auto m = modes::uniform_modes(c, h, w, static_cast<modes::ResolutionMode>(state.range(0)),
                                modes::ResolutionMode::M0);
  for (auto _ : state) {
    entropy::RangeEncoder enc;
    benchmark::DoNotOptimize(modes::hamc_encode(enc, y, params, m));
    benchmark::DoNotOptimize(enc.finish());
  }
}
BENCHMARK(BM_HamcEncode)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_PFrameEncode(benchmark::State& state) {
  torch::manual_seed(2);
  PFrameModel model(ModelConfig::tiny());
  model->eval();
  model->freeze();
  auto clip = data::gen_synthetic({}).clip;
  torch::NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(model->encode(clip.frame(0), clip.frame(1)));
}
BENCHMARK(BM_PFrameEncode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
