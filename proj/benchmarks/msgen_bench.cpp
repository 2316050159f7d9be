// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "msgen/autograd.hpp"
#include "msgen/cost_model.hpp"
#include "msgen/gemm.hpp"
#include "msgen/quantizer.hpp"
#include "msgen/rng.hpp"
#include "msgen/sampler.hpp"
#include "msgen/trainer.hpp"

namespace {

using namespace msgen;

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

ModelConfig bench_model(AttentionMode mode) {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.width = 128;
  cfg.heads = 4;
  cfg.vocab = 64;
  cfg.d_code = 16;
  cfg.schedule = ScaleSchedule({1, 2, 3, 4, 6, 8});
  cfg.attention_mode = mode;
  cfg.window = 3;
  return cfg;
}

void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor(rng, n, n), b = random_tensor(rng, n, n);
  Tensor c = Tensor::matrix(n, n);
  for (auto _ : state) {
    gemm::nn(n, n, n, a.data(), n, b.data(), n, c.data(), n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate,
                         benchmark::Counter::kIs1000);
}
BENCHMARK(BM_GemmNN)->Arg(64)->Arg(128)->Arg(256);

void BM_Forward(benchmark::State& state) {
  const auto mode = state.range(0) == 0 ? AttentionMode::kMarkov : AttentionMode::kFullContext;
  const ModelConfig cfg = bench_model(mode);
  const Model model(cfg);
  Rng rng(2);
  std::vector<Tensor> states;
  for (std::size_t t = 0; t < cfg.schedule.count(); ++t)
    states.push_back(random_tensor(rng, model.state_tokens(t), cfg.width));
  for (auto _ : state) {
    Graph g(false);
    std::vector<Var> vars;
    for (const Tensor& s : states) vars.push_back(g.constant(s));
    benchmark::DoNotOptimize(model.forward(g, vars).back().value().data());
  }
  state.SetLabel(std::string(to_string(mode)));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const ModelConfig cfg = bench_model(AttentionMode::kMarkov);
  Model model(cfg);
  Rng rng(3);
  const Codebook cb(random_tensor(rng, cfg.vocab, cfg.d_code), true);
  std::vector<TrainingExample> data;
  for (int i = 0; i < 4; ++i) {
    ResidualPyramid p;
    for (std::size_t t = 0; t < cfg.schedule.count(); ++t) {
      std::vector<int> grid(cfg.schedule.tokens(t));
      for (int& v : grid) v = static_cast<int>(rng.below(cfg.vocab));
      p.grids.push_back(std::move(grid));
    }
    data.push_back(prepare_example(std::move(p), i % 8, cb, cfg.schedule, cfg.kernel));
  }
  TrainConfig tc;
  tc.batch = 4;
  Trainer trainer(model, tc, data);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step().loss);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  const auto mode = state.range(0) == 0 ? AttentionMode::kMarkov : AttentionMode::kFullContext;
  const ModelConfig cfg = bench_model(mode);
  const Model model(cfg);
  Rng rng(4);
  const Codebook cb(random_tensor(rng, cfg.vocab, cfg.d_code), true);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    SampleOptions so;
    so.seed = seed++;
    benchmark::DoNotOptimize(generate(model, cb, 0, so).f_hat.data());
  }
  state.SetLabel(std::string(to_string(mode)));
}
BENCHMARK(BM_Generate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EncodeFeatures(benchmark::State& state) {
  const ScaleSchedule sch({1, 2, 3, 4, 6, 8, 10, 13, 16});
  Rng rng(5);
  const Codebook cb(random_tensor(rng, 512, 32), true);
  const Tensor f = random_tensor(rng, 256, 32);
  for (auto _ : state) benchmark::DoNotOptimize(encode_features(f, cb, sch).f_hat.data());
}
BENCHMARK(BM_EncodeFeatures)->Unit(benchmark::kMillisecond);

void BM_CostCompare(benchmark::State& state) {
  ModelConfig cfg;
  cfg.depth = 24;
  cfg.apply_paper_scaling();
  const auto presets = default_presets();
  for (auto _ : state) benchmark::DoNotOptimize(compare(cfg, presets, 25, 2).rows.back().ratio);
}
BENCHMARK(BM_CostCompare);

}  // namespace

BENCHMARK_MAIN();
