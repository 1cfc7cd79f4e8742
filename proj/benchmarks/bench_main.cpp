#include <benchmark/benchmark.h>

#include "marginforge/data.hpp"
#include "marginforge/margin.hpp"
#include "marginforge/objective.hpp"
#include "marginforge/trainer.hpp"

using namespace marginforge;

namespace {

std::vector<Vector> random_reprs(std::size_t b, std::size_t d, std::uint64_t seed) {
  Rng rng(seed, "bench");
  std::vector<Vector> out(b, Vector(d));
  for (auto& v : out)
    for (auto& x : v) x = rng.normal();
  return out;
}

void BM_RescaleMargins(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const DistanceMatrix d = dse_text_distances(random_reprs(b, 16, 1));
  const RescaleConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(rescale_margins(d, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(b * (b - 1)));
}
BENCHMARK(BM_RescaleMargins)->Arg(16)->Arg(64)->Arg(256);

void BM_BetaToStddev(benchmark::State& state) {
  double beta = 0.04;
  for (auto _ : state) {
    benchmark::DoNotOptimize(beta_to_stddev(beta));
    beta = beta == 0.04 ? 0.05 : 0.04;
  }
}
BENCHMARK(BM_BetaToStddev);

void BM_FullLoss(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto v = random_reprs(b, 16, 2), t = random_reprs(b, 16, 3);
  const SimilarityMatrix s = similarity_matrix(v, t);
  const RescaleConfig rc;
  const ExpertSlot dse{{rescale_margins(dse_video_distances(v), rc)}, {rescale_margins(dse_text_distances(t), rc)}};
  const ExpertSlot sse = dse;
  ObjectiveConfig cfg;
  cfg.lambda = 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(full_loss_similarity_grad(s, dse, sse, cfg));
}
BENCHMARK(BM_FullLoss)->Arg(16)->Arg(64)->Arg(256);

void BM_TrainEpoch(benchmark::State& state) {
  SynthConfig dc;
  dc.seed = 1;
  const Dataset ds = generate(dc);
  TrainConfig cfg;
  cfg.hidden_dim = static_cast<std::size_t>(state.range(0));
  const TrainingData data(ds);
  TwoTowerModel model = initial_model(ds, cfg);
  AdamState adam{Vector(parameter_count(model), 0.0), Vector(parameter_count(model), 0.0), 0};
  int epoch = 2;
  for (auto _ : state) benchmark::DoNotOptimize(train_epoch(model, adam, data, cfg, epoch++));
}
BENCHMARK(BM_TrainEpoch)->Arg(0)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
