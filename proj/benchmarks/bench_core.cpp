#include <benchmark/benchmark.h>

#include "acadet/data.hpp"
#include "acadet/detection.hpp"
#include "acadet/eval.hpp"
#include "acadet/graph.hpp"
#include "acadet/model.hpp"
#include "acadet/param_store.hpp"

using namespace acadet;

namespace {

SeqTensor randn(Rng& rng, int b, int c, int t) {
  SeqTensor x(b, c, t);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

ModelConfig bench_model() {
  ModelConfig m;
  m.embed_dim = 64;
  m.levels = 4;
  return m;
}

void BM_Conv1dForward(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  Rng rng(1);
  SeqTensor x = randn(rng, 4, 64, 256);
  SeqTensor w = randn(rng, 64, 64, k);
  SeqTensor b = randn(rng, 1, 64, 1);
  for (auto _ : state) {
    Graph g;
    Value y = g.conv1d(g.constant(x), g.constant(w), g.constant(b),
                       {1, same_padding(k), 1});
    benchmark::DoNotOptimize(y.tensor().data().data());
  }
  state.SetItemsProcessed(state.iterations() * 4 * 256);
}

void BM_Conv1dBackward(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  Rng rng(2);
  SeqTensor x = randn(rng, 4, 64, 256);
  SeqTensor w = randn(rng, 64, 64, k);
  SeqTensor b = randn(rng, 1, 64, 1);
  SeqTensor ones(4, 1, 256);
  ones.fill(1.0);
  for (auto _ : state) {
    Graph g;
    Value y = g.conv1d(g.input(x, true), g.input(w, true), g.input(b, true),
                       {1, same_padding(k), 1});
    Value root = g.weighted_sum(g.channel_avg(y), ones);
    g.backward(root);
    benchmark::DoNotOptimize(root.tensor().at(0, 0, 0));
  }
  state.SetItemsProcessed(state.iterations() * 4 * 256);
}

void BM_ModelForward(benchmark::State& state) {
  Model model(bench_model());
  model.init_params(3);
  Rng rng(3);
  const SeqTensor x = randn(rng, 2, 16, 128);
  for (auto _ : state) {
    HeadOutputs outs = model.infer(x);
    benchmark::DoNotOptimize(outs.class_logits[0].data().data());
  }
}

void BM_SoftNms(benchmark::State& state) {
  Rng rng(4);
  std::vector<ActionSegment> segs;
  for (int i = 0; i < 200; ++i) {
    ActionSegment s;
    s.start = rng.uniform(0.0, 100.0);
    s.end = s.start + rng.uniform(0.5, 20.0);
    s.class_id = static_cast<int>(rng.uniform_int(0, 4));
    s.score = rng.uniform(0.001, 1.0);
    segs.push_back(s);
  }
  for (auto _ : state) {
    auto kept = soft_nms(segs, SoftNmsConfig{});
    benchmark::DoNotOptimize(kept.data());
  }
}

void BM_TrainStep(benchmark::State& state) {
  Model model(bench_model());
  model.init_params(5);
  SyntheticSpec spec;
  spec.num_videos = 4;
  auto records = generate_synthetic(spec);
  Rng rng(6);
  auto batches = make_batches(records, 4, 8, rng, false);
  AdamW optim(model.params());
  const LossConfig lc;
  for (auto _ : state) {
    model.params().zero_grads();
    Graph g;
    HeadGraph hg = model.forward(g, batches[0].features);
    AssignmentTargets targets =
        assign_targets(batches[0].segments, level_shapes(hg), lc);
    Value loss = total_loss(g, hg, targets, lc);
    g.backward(loss);
    optim.step(1e-4);
    benchmark::DoNotOptimize(loss.tensor().at(0, 0, 0));
  }
}

}  // namespace

BENCHMARK(BM_Conv1dForward)->Arg(3)->Arg(17)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Conv1dBackward)->Arg(3)->Arg(17)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SoftNms)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
