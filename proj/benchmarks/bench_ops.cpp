#include <benchmark/benchmark.h>

#include <random>

#include "hfgcn/model.hpp"
#include "hfgcn/ops.hpp"
#include "hfgcn/training.hpp"

using namespace hfgcn;

namespace {

Tensor rand_tensor(Shape s, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform(std::move(s), 1.0, rng);
}

// (B, C, T, V) at a mid-network stage
constexpr std::size_t B = 4, C = 64, T = 64, V = 25;

void BM_conv1x1(benchmark::State& state) {
  Tape tape(Tape::Mode::inference);
  const Var x = tape.constant(rand_tensor({B, C, T, V}));
  const Var w = tape.constant(rand_tensor({C, C}, 2));
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv1x1(tape, x, w).value().data());
  state.SetItemsProcessed(state.iterations() * B * C * C * T * V);
}
BENCHMARK(BM_conv1x1)->Unit(benchmark::kMillisecond);

void BM_temporal_conv(benchmark::State& state) {
  Tape tape(Tape::Mode::inference);
  const std::size_t dilation = static_cast<std::size_t>(state.range(0));
  const Var x = tape.constant(rand_tensor({B, 21, T, V}));
  const Var w = tape.constant(rand_tensor({21, 21, 5}, 2));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::temporal_conv(tape, x, w, {}, {1, dilation}).value().data());
  }
}
BENCHMARK(BM_temporal_conv)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_attention_logits(benchmark::State& state) {
  Tape tape(Tape::Mode::inference);
  const Var q = tape.constant(rand_tensor({B, 8, T, V}));
  const Var k = tape.constant(rand_tensor({B, 8, T, V}, 2));
  for (auto _ : state) benchmark::DoNotOptimize(ops::contract(tape, "bcti,bctj->btij", q, k).value().data());
}
BENCHMARK(BM_attention_logits)->Unit(benchmark::kMillisecond);

void BM_channel_topology(benchmark::State& state) {
  Tape tape(Tape::Mode::inference);
  const Var a = tape.constant(rand_tensor({B, C, V, V}));
  const Var x = tape.constant(rand_tensor({B, C, T, V}, 2));
  for (auto _ : state) benchmark::DoNotOptimize(ops::contract(tape, "boij,botj->boti", a, x).value().data());
}
BENCHMARK(BM_channel_topology)->Unit(benchmark::kMillisecond);

void BM_batch_norm_train(benchmark::State& state) {
  Tape tape(Tape::Mode::inference);
  const Var x = tape.constant(rand_tensor({B, C, T, V}));
  const Var g = tape.constant(Tensor({C}, 1.0)), b = tape.constant(Tensor({C}));
  ops::BatchNormState st(C);
  for (auto _ : state) benchmark::DoNotOptimize(ops::batch_norm(tape, x, g, b, st, true).value().data());
}
BENCHMARK(BM_batch_norm_train)->Unit(benchmark::kMillisecond);

ModelConfig reduced_model() {
  ModelConfig cfg;
  cfg.blocks = ModelConfig::reduced_blocks(4, 32);
  cfg.frames = 32;
  cfg.persons = 1;
  cfg.num_classes = 8;
  return cfg;
}

void BM_model_forward(benchmark::State& state) {
  Model model(reduced_model(), 1);
  const Tensor x = rand_tensor({16, 3, 32, 25, 1});
  for (auto _ : state) {
    Tape tape(Tape::Mode::inference);
    benchmark::DoNotOptimize(model.forward(tape, tape.constant(x), false).value().data());
  }
}
BENCHMARK(BM_model_forward)->Unit(benchmark::kMillisecond);

void BM_model_train_step(benchmark::State& state) {
  Model model(reduced_model(), 1);
  Sgd sgd(model.parameters(), 0.9, 4e-4);
  const Tensor x = rand_tensor({16, 3, 32, 25, 1});
  std::vector<std::size_t> labels(16);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 8;
  for (auto _ : state) {
    Tape tape;
    const Var loss = label_smoothing_ce(tape, model.forward(tape, tape.constant(x), true), labels, 0.1);
    tape.backward(loss);
    sgd.step(0.01);
  }
}
BENCHMARK(BM_model_train_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
