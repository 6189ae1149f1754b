#include <benchmark/benchmark.h>

#include "vivit/layers.hpp"
#include "vivit/model.hpp"
#include "vivit/ops.hpp"
#include "vivit/rng.hpp"

namespace {

using namespace vivit;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = rng.normal();
  return Tensor::from_values(std::move(shape), values);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor a = random_tensor({n, n}, 1);
  const Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv3d(benchmark::State& state) {
  const auto channels = state.range(0);
  const auto extent = state.range(1);
  const Tensor x = random_tensor({channels, extent, extent, extent}, 3);
  const Tensor w = random_tensor({channels, channels, 3, 3, 3}, 4);
  const Tensor b = Tensor::zeros({channels});
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv3d(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv3d)->Args({16, 8})->Args({16, 16})->Args({64, 4});

void BM_ConvBackward(benchmark::State& state) {
  const auto extent = state.range(0);
  Tensor x = random_tensor({16, extent, extent, extent}, 5);
  Tensor w = random_tensor({16, 16, 3, 3, 3}, 6);
  Tensor b = Tensor::zeros({16});
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    tape.backward(ops::sum(ops::conv3d(x, w, b, 1, 1)));
    x.zero_grad();
    w.zero_grad();
  }
}
BENCHMARK(BM_ConvBackward)->Arg(8)->Arg(16);

void BM_Attention(benchmark::State& state) {
  const auto tokens = state.range(0);
  ParameterSet params(7);
  const MultiHeadAttention attn(params, "attn", 64, 4);
  const Tensor x = random_tensor({tokens, 64}, 8);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(attn.forward(x));
}
BENCHMARK(BM_Attention)->Arg(64)->Arg(192)->Arg(512);

void BM_EncoderForward(benchmark::State& state) {
  const auto modalities = state.range(0);
  const ModelConfig config = ModelConfig::desk();
  VivitModel model(config, 9, ModelHeads::kSegment);
  StudyTensors study;
  study.id = "bench";
  const char* names[] = {"A", "B", "C"};
  for (std::int64_t m = 0; m < modalities; ++m) {
    model.register_modality(names[m]);
    study.volumes.push_back({names[m], random_tensor({1, 16, 16, 16}, 10 + m)});
  }
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.encode(study));
}
BENCHMARK(BM_EncoderForward)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_SegmentForward(benchmark::State& state) {
  const ModelConfig config = ModelConfig::desk();
  VivitModel model(config, 11, ModelHeads::kSegment);
  StudyTensors study;
  study.id = "bench";
  for (const char* name : {"A", "B"}) {
    model.register_modality(name);
    study.volumes.push_back({name, random_tensor({1, 16, 16, 16}, 12)});
  }
  model.ensure_bank_entries(study.modality_names());
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.segment(study));
}
BENCHMARK(BM_SegmentForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
