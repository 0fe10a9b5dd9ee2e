#include <benchmark/benchmark.h>

#include "mufuru/cells.hpp"
#include "mufuru/training.hpp"

using namespace mufuru;

namespace {

constexpr int kInput = 32;
constexpr int kState = 64;
constexpr int kBatch = 16;

Cell bench_cell(CellKind kind) {
  Rng rng(1);
  return make_cell(kind, {kInput, kState}, kAllCompositionOps, rng);
}

void step_forward(benchmark::State& state, CellKind kind) {
  Rng rng(2);
  Cell cell = bench_cell(kind);
  Tensor x = Tensor::uniform({kBatch, kInput}, -1, 1, rng, false);
  Tensor s = Tensor::uniform({kBatch, kState}, -1, 1, rng, false);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(cell_step(tape, cell, x, s).state.value().data());
  }
}

void BM_VanillaStepForward(benchmark::State& state) {
  step_forward(state, CellKind::Vanilla);
}
void BM_GruStepForward(benchmark::State& state) {
  step_forward(state, CellKind::Gru);
}
void BM_MufuruStepForward(benchmark::State& state) {
  step_forward(state, CellKind::Mufuru);
}

void unroll_backward(benchmark::State& state, CellKind kind) {
  Rng rng(3);
  Cell cell = bench_cell(kind);
  ClassifierHead head = init_classifier_head(2, kState, rng);
  const int steps = static_cast<int>(state.range(0));
  std::vector<Tensor> xs;
  for (int t = 0; t < steps; ++t) {
    xs.push_back(Tensor::uniform({kBatch, kInput}, -1, 1, rng, false));
  }
  const std::vector<int> targets(kBatch, 1);
  for (auto _ : state) {
    Tape tape;
    Unrolled u = unroll(tape, cell, xs);
    Tensor logits = tape.linear(u.outputs.back(), head.w, head.b);
    Tensor loss = cross_entropy_sum(tape, logits, targets);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(state.iterations() * steps * kBatch);
}

void BM_GruUnrollBackward(benchmark::State& state) {
  unroll_backward(state, CellKind::Gru);
}
void BM_MufuruUnrollBackward(benchmark::State& state) {
  unroll_backward(state, CellKind::Mufuru);
}

void BM_AdamStep(benchmark::State& state) {
  Rng rng(4);
  Cell cell = bench_cell(CellKind::Mufuru);
  auto params = cell.parameters();
  for (Tensor& p : params) {
    auto g = p.grad();
    for (double& v : g) v = rng.uniform(-1, 1);
  }
  Adam adam({}, params);
  for (auto _ : state) {
    adam.step(params);
  }
}

}  // namespace

BENCHMARK(BM_VanillaStepForward);
BENCHMARK(BM_GruStepForward);
BENCHMARK(BM_MufuruStepForward);
BENCHMARK(BM_GruUnrollBackward)->Arg(16)->Arg(32);
BENCHMARK(BM_MufuruUnrollBackward)->Arg(16)->Arg(32);
BENCHMARK(BM_AdamStep);

BENCHMARK_MAIN();
