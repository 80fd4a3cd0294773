#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "semalign/align/adapter.hpp"
#include "semalign/align/semantic_store.hpp"
#include "semalign/backbone/backbone.hpp"
#include "semalign/corpus/split.hpp"
#include "semalign/eval/metrics.hpp"
#include "semalign/optim/adam.hpp"

namespace semalign {

enum class TrainMode {
  base,  // backbone + BPR only
  con,   // contrastive alignment
  gen,   // masked generative alignment
};

std::string_view to_string(TrainMode mode);
TrainMode mode_from_string(std::string_view name);

struct TrainConfig {
  TrainMode mode = TrainMode::base;
  BackboneConfig backbone;
  std::size_t dim = 32;
  double init_std = 0.1;
  AdamConfig adam;
  std::size_t batch_size = 4096;
  int max_epochs = 300;
  int patience = 5;    // validation rounds without Recall@20 improvement
  int eval_every = 1;  // epochs
  std::uint64_t seed = 0;
  double lambda = 1.0;
  double tau = 0.2;
  double mask_ratio = 0.1;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double loss_rec = 0.0;
  double loss_info = 0.0;
  std::optional<double> recall20;
  std::optional<double> ndcg20;
  double seconds = 0.0;  // training time only, evaluation excluded
};

struct StepStats {
  double loss_rec = 0.0;
  double loss_info = 0.0;
  std::size_t info_terms = 0;  // InfoNCE groups (users / items) that contributed
};

struct TrainResult {
  EmbeddingTable table;
  std::optional<AdapterNet> adapter;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  MetricsReport best_validation;
};

/// One training run over `data.train`; validation drives early stopping.
/// `data` and `semantic` must outlive the trainer. `semantic` must be aligned
/// to the split's id maps and is required for con/gen.
class Trainer {
 public:
  Trainer(const SplitSet& data, const SemanticStore* semantic, TrainConfig cfg,
          std::optional<EmbeddingTable> init = std::nullopt);

  StepStats step();
  EpochLog run_epoch();
  MetricsReport evaluate(EvalStage stage) const;
  /// Runs until patience is exhausted or max_epochs, then restores the
  /// parameters of the best validation round.
  TrainResult fit();

  const EmbeddingTable& table() const { return table_; }
  const std::optional<AdapterNet>& adapter() const { return adapter_; }
  const TrainConfig& config() const { return cfg_; }
  int epoch() const { return epoch_; }

 private:
  StepStats step_base_or_con(const std::vector<Triple>& batch, Matrix& grad_x);
  StepStats step_gen(const std::vector<Triple>& batch, Matrix& grad_x);
  void apply(const Matrix& grad_x);

  const SplitSet& data_;
  const SemanticStore* semantic_;
  TrainConfig cfg_;
  NormalizedAdjacency adj_;
  BatchSampler sampler_;
  EmbeddingTable table_;
  std::optional<AdapterNet> adapter_;
  AdapterGrads adapter_grads_;
  Adam adam_;
  std::uint64_t steps_ = 0;
  int epoch_ = 0;
  bool warned_skip_ = false;
};

TrainResult train_base(const SplitSet& data, const TrainConfig& cfg, std::optional<EmbeddingTable> init = std::nullopt);
TrainResult train_con(const SplitSet& data, const SemanticStore& semantic, const TrainConfig& cfg,
                      std::optional<EmbeddingTable> init = std::nullopt);
TrainResult train_gen(const SplitSet& data, const SemanticStore& semantic, const TrainConfig& cfg,
                      std::optional<EmbeddingTable> init = std::nullopt);

/// Test-set metrics for a trained table (mask row unused).
MetricsReport test_metrics(const SplitSet& data, const EmbeddingTable& table, const BackboneConfig& backbone);

/// Copies rows whose raw id appears in the checkpoint; every other row
/// (including the mask token when absent) is drawn fresh.
EmbeddingTable init_from_checkpoint(const std::filesystem::path& path, const IdMap& users, const IdMap& items,
                                    std::size_t dim, double init_std, std::uint64_t seed);

/// One JSON object per epoch:
/// {"epoch":n,"loss_rec":f,"loss_info":f,"recall20":f?,"ndcg20":f?,"sec":f}
void write_train_log(std::ostream& out, const std::vector<EpochLog>& log);

}  // namespace semalign
