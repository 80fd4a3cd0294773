#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "semalign/align/semantic_store.hpp"
#include "semalign/common/linalg.hpp"
#include "semalign/corpus/split.hpp"

namespace semalign {

inline constexpr int kDefaultCutoffs[] = {5, 10, 20};

using ItemLists = std::vector<std::vector<std::uint32_t>>;

/// Top-N lists for every user that has at least one ground-truth item.
struct RankingResult {
  std::vector<int> cutoffs;               // sorted, unique
  std::vector<std::uint32_t> users;       // evaluated users
  ItemLists ranked;                       // top max(cutoffs), best first
  ItemLists truth;                        // sorted ground-truth items
};

/// All-rank protocol over an I x J score matrix: masked items are never
/// ranked; ties go to the lower item index.
RankingResult rank_all(const Matrix& scores, const ItemLists& masked, const ItemLists& truth,
                       std::span<const int> cutoffs);

/// Same, scoring with e_u . e_v.
RankingResult rank_all_embeddings(const Matrix& e, std::size_t num_users, const ItemLists& masked,
                                  const ItemLists& truth, std::span<const int> cutoffs);

double recall_at_n(const RankingResult& result, int n);
double ndcg_at_n(const RankingResult& result, int n);

struct MetricsReport {
  std::map<int, double> recall;
  std::map<int, double> ndcg;
  std::size_t users_evaluated = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport compute_metrics(const RankingResult& result);

enum class EvalStage {
  validation,  // masks train items
  test,        // masks train and validation items
};

MetricsReport evaluate_split(const Matrix& scores, const SplitSet& split, EvalStage stage,
                             std::span<const int> cutoffs = kDefaultCutoffs);

/// {"recall": {"5": f, ...}, "ndcg": {...}, "users_evaluated": n}
std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);
void print_metrics_table(std::ostream& out, const MetricsReport& report);

/// score(u, v) = cos(s_u, s_v); zero vectors score 0.
Matrix semantic_only_scores(const SemanticStore& store);

}  // namespace semalign
