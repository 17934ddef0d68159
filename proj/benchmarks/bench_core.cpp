#include <benchmark/benchmark.h>

#include "vads/aggregation.hpp"
#include "vads/evaluation.hpp"
#include "vads/graph.hpp"
#include "vads/rng.hpp"
#include "vads/segmentation.hpp"

namespace {

vads::Tensor random_tensor(vads::Shape shape, std::uint64_t seed) {
  vads::Tensor t = vads::Tensor::zeros(std::move(shape));
  vads::Rng rng(seed);
  for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv1dForward(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const vads::Tensor x = random_tensor({t, 64}, 1);
  const vads::Tensor k = random_tensor({3, 64, 64}, 2);
  for (auto _ : state) {
    vads::Graph g;
    benchmark::DoNotOptimize(g.value(g.conv1d(g.input(x), g.input(k), 4)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t));
}
BENCHMARK(BM_Conv1dForward)->Arg(64)->Arg(256);

void BM_SegmenterTrainStep(benchmark::State& state) {
  vads::SegmenterConfig cfg;
  vads::SegmenterModel model = vads::SegmenterModel::create(cfg, 3);
  const vads::Tensor features = random_tensor({80, 64}, 4);
  vads::Tensor labels = vads::Tensor::zeros({80});
  labels.at(0) = labels.at(20) = labels.at(79) = 1.0;
  for (auto _ : state) {
    vads::Graph g;
    auto ids = vads::use_segmenter_params(g, model, vads::WeightSource::Raw);
    auto probs = vads::segmenter_forward_graph(g, cfg, ids, g.input(features), true, 7);
    auto loss = g.bce_loss(probs, g.input(labels), vads::Reduction::Mean, 20.0);
    auto grads = g.backward(loss);
    vads::adam_step(model.store, grads, vads::AdamConfig{});
    vads::ema_update(model.store, 0.9);
  }
}
BENCHMARK(BM_SegmenterTrainStep);

void BM_Aggregate(benchmark::State& state) {
  vads::SoftDBoFConfig cfg;
  vads::ParamStore store;
  vads::init_softdbof_params(store, "agg", cfg, 5);
  const vads::Tensor x = random_tensor({static_cast<std::size_t>(state.range(0)), 64}, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(vads::aggregate_eval(x, store, "agg", cfg));
  }
}
BENCHMARK(BM_Aggregate)->Arg(16)->Arg(64);

void BM_DecodeAndMatch(benchmark::State& state) {
  vads::Rng rng(7);
  vads::Tensor probs = vads::Tensor::zeros({4000});
  for (double& v : probs.values) v = rng.uniform(0.0, 1.0);
  std::vector<double> gts;
  for (int i = 0; i < 200; ++i) gts.push_back(rng.uniform(0.0, 1000.0));
  for (auto _ : state) {
    const auto bounds = vads::decode_boundaries(probs, 4.0, 0.6, 1.0);
    std::vector<double> times;
    for (const auto& b : bounds) times.push_back(b.time);
    benchmark::DoNotOptimize(vads::match_boundaries(times, gts, 0.5));
  }
}
BENCHMARK(BM_DecodeAndMatch);

}  // namespace

BENCHMARK_MAIN();
