#include <benchmark/benchmark.h>

#include "semalign/align/losses.hpp"
#include "semalign/corpus/split.hpp"
#include "semalign/eval/metrics.hpp"
#include "semalign/optim/trainer.hpp"
#include "semalign/synth/synth.hpp"

namespace semalign {
namespace {

// Default synthetic corpus, built once.
struct Corpus {
  SynthData data;
  SplitSet split;
  SemanticStore semantic;

  static const Corpus& get() {
    static const Corpus c = [] {
      SynthConfig cfg;
      cfg.seed = 1;
      auto data = generate(cfg);
      auto split = split_interactions(data.interactions, {}, 1);
      auto semantic = align_store(data.semantic, split.train.users, split.train.items);
      return Corpus{std::move(data), std::move(split), std::move(semantic)};
    }();
    return c;
  }
};

void BM_Encode(benchmark::State& state) {
  const auto& c = Corpus::get();
  const auto adj = build_normalized_adjacency(c.split.train);
  BackboneConfig cfg;
  cfg.kind = state.range(0) == 0 ? BackboneKind::lightgcn : BackboneKind::gccf;
  const auto table = EmbeddingTable::random(c.split.train.num_users(), c.split.train.num_items(), 32, 0.1, 1);
  const Matrix x = table.entities();
  for (auto _ : state) benchmark::DoNotOptimize(encode(x, adj, cfg));
}
BENCHMARK(BM_Encode)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_Epoch(benchmark::State& state) {
  const auto& c = Corpus::get();
  TrainConfig cfg;
  cfg.mode = static_cast<TrainMode>(state.range(0));
  Trainer trainer(c.split, cfg.mode == TrainMode::base ? nullptr : &c.semantic, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.run_epoch());
  state.SetLabel(std::string(to_string(cfg.mode)));
}
BENCHMARK(BM_Epoch)
    ->Arg(static_cast<int>(TrainMode::base))
    ->Arg(static_cast<int>(TrainMode::gen))
    ->Arg(static_cast<int>(TrainMode::con))
    ->Unit(benchmark::kMillisecond);

void BM_InfoNce(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix a = Matrix::Random(n, 32);
  const Matrix b = Matrix::Random(n, 32);
  for (auto _ : state) benchmark::DoNotOptimize(info_nce(a, b, 0.2));
}
BENCHMARK(BM_InfoNce)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

void BM_RankAll(benchmark::State& state) {
  const auto& c = Corpus::get();
  const auto table = EmbeddingTable::random(c.split.train.num_users(), c.split.train.num_items(), 32, 0.1, 1);
  const Matrix scores = score_all(table.entities(), table.num_users);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_split(scores, c.split, EvalStage::test));
}
BENCHMARK(BM_RankAll)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace semalign
