#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/eval/metrics.hpp"

namespace semalign {
namespace {

using Lists = ItemLists;

// Random scores on a coarse grid so that ties occur.
Matrix tied_scores(Eigen::Index users, Eigen::Index items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> grid(0, 9);
  Matrix m(users, items);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = grid(rng) / 10.0;
  return m;
}

Matrix distinct_scores(Eigen::Index users, Eigen::Index items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(users, items);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Disjoint random mask and truth sets per user; some users get no truth.
std::pair<Lists, Lists> random_sets(std::size_t users, std::uint32_t items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Lists masked(users);
  Lists truth(users);
  std::uniform_int_distribution<int> pick(0, 4);
  for (std::size_t u = 0; u < users; ++u) {
    for (std::uint32_t v = 0; v < items; ++v) {
      const int r = pick(rng);
      if (r == 0) masked[u].push_back(v);
      if (r == 1 && u % 7 != 3) truth[u].push_back(v);
    }
  }
  return {masked, truth};
}

TEST(RankAll, SingleUserExamples) {
  Matrix scores(1, 3);
  scores << 0.9, 0.1, 0.5;
  const int cut[] = {2};
  EXPECT_EQ(rank_all(scores, {{}}, {{0}}, cut).ranked[0], (std::vector<std::uint32_t>{0, 2}));
  EXPECT_EQ(rank_all(scores, {{0}}, {{1}}, cut).ranked[0], (std::vector<std::uint32_t>{2, 1}));
}

TEST(RankAll, TiesGoToTheLowerIndex) {
  Matrix scores(1, 4);
  scores << 0.5, 0.7, 0.5, 0.7;
  const int cut[] = {4};
  EXPECT_EQ(rank_all(scores, {{}}, {{0}}, cut).ranked[0], (std::vector<std::uint32_t>{1, 3, 0, 2}));
}

TEST(RankAll, MatchesFullSortOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix scores = seed % 2 ? tied_scores(20, 30, seed) : distinct_scores(20, 30, seed);
    const auto [masked, truth] = random_sets(20, 30, seed);
    const auto result = rank_all(scores, masked, truth, kDefaultCutoffs);
    ASSERT_EQ(result.users.size(), result.ranked.size());
    for (std::size_t k = 0; k < result.users.size(); ++k) {
      const auto u = result.users[k];
      EXPECT_EQ(result.ranked[k], testing::naive_top_n(scores, u, masked[u], 20)) << "seed " << seed << " user " << u;
    }
  }
}

TEST(RankAll, NeverReturnsMaskedItemsAndSkipsUsersWithoutTruth) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto [masked, truth] = random_sets(50, 80, seed);
    const auto result = rank_all(tied_scores(50, 80, seed), masked, truth, kDefaultCutoffs);
    for (std::size_t k = 0; k < result.users.size(); ++k) {
      const auto& m = masked[result.users[k]];
      EXPECT_LE(result.ranked[k].size(), 20U);
      for (auto v : result.ranked[k]) EXPECT_EQ(std::find(m.begin(), m.end(), v), m.end());
      EXPECT_FALSE(truth[result.users[k]].empty());
    }
    for (std::size_t u = 0; u < 50; ++u) {
      const bool listed = std::find(result.users.begin(), result.users.end(), u) != result.users.end();
      EXPECT_EQ(listed, !truth[u].empty());
    }
  }
}

TEST(Metrics, RecallExamples) {
  Matrix scores(1, 3);
  scores << 0.9, 0.1, 0.5;
  const int cut[] = {2};
  // truth {a, b} = {0, 1}, top-2 [0, 2]
  const auto r = rank_all(scores, {{}}, {{0, 1}}, cut);
  EXPECT_DOUBLE_EQ(recall_at_n(r, 2), 0.5);
  const auto all = rank_all(scores, {{}}, {{0, 2}}, cut);
  EXPECT_DOUBLE_EQ(recall_at_n(all, 2), 1.0);
  EXPECT_THROW(recall_at_n(r, 3), DataError);
}

TEST(Metrics, NdcgHandComputed) {
  // DCG = 1, IDCG = 1 + 1/log2(3) = 1.63093
  Matrix scores(1, 3);
  scores << 0.9, 0.1, 0.5;
  const int cut[] = {2};
  const auto r = rank_all(scores, {{}}, {{0, 1}}, cut);
  EXPECT_NEAR(1.0 + 1.0 / std::log2(3.0), 1.63093, 1e-5);
  EXPECT_NEAR(ndcg_at_n(r, 2), 0.61315, 1e-5);
  EXPECT_DOUBLE_EQ(ndcg_at_n(rank_all(scores, {{}}, {{0, 2}}, cut), 2), 1.0);
  EXPECT_DOUBLE_EQ(ndcg_at_n(rank_all(scores, {{}}, {{1}}, cut), 2), 0.0);
}

TEST(Metrics, MatchNaiveOracleOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix scores = tied_scores(50, 80, seed);
    const auto [masked, truth] = random_sets(50, 80, seed + 1);
    const auto result = rank_all(scores, masked, truth, kDefaultCutoffs);
    for (int n : kDefaultCutoffs) {
      double recall = 0.0;
      double ndcg = 0.0;
      int users = 0;
      for (std::size_t u = 0; u < 50; ++u) {
        if (truth[u].empty()) continue;
        const auto ranked = testing::naive_top_n(scores, static_cast<Eigen::Index>(u), masked[u], 20);
        recall += testing::naive_recall(ranked, truth[u], n);
        ndcg += testing::naive_ndcg(ranked, truth[u], n);
        ++users;
      }
      EXPECT_NEAR(recall_at_n(result, n), recall / users, 1e-12);
      EXPECT_NEAR(ndcg_at_n(result, n), ndcg / users, 1e-12);
    }
  }
}

TEST(Metrics, BoundedAndPerfectOnlyForIdealPrefixes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [masked, truth] = random_sets(30, 40, seed);
    const auto m = compute_metrics(rank_all(tied_scores(30, 40, seed), masked, truth, kDefaultCutoffs));
    for (const auto& [n, v] : m.recall) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (const auto& [n, v] : m.ndcg) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  // Ideal scores: truth items first.
  Matrix scores = Matrix::Zero(1, 10);
  scores(0, 4) = 3.0;
  scores(0, 7) = 2.0;
  const int cut[] = {1, 2, 5};
  const auto r = rank_all(scores, {{}}, {{4, 7}}, cut);
  for (int n : cut) EXPECT_DOUBLE_EQ(ndcg_at_n(r, n), 1.0);
  scores(0, 1) = 2.5;  // a miss at rank 2
  EXPECT_LT(ndcg_at_n(rank_all(scores, {{}}, {{4, 7}}, cut), 2), 1.0);
}

TEST(Metrics, InvariantToMonotoneTransforms) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix scores = tied_scores(25, 30, seed);
    const auto [masked, truth] = random_sets(25, 30, seed);
    const auto base = rank_all(scores, masked, truth, kDefaultCutoffs);
    const Matrix transformed = (scores.array() * 3.0 - 1.0).exp();
    const auto again = rank_all(transformed, masked, truth, kDefaultCutoffs);
    EXPECT_EQ(base.ranked, again.ranked);
    EXPECT_EQ(compute_metrics(base), compute_metrics(again));
  }
}

TEST(Metrics, InvariantToItemStorageOrder) {
  // With distinct scores, permuting the item columns and mapping indices back
  // yields the same lists and metrics.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix scores = distinct_scores(15, 25, seed);
    const auto [masked, truth] = random_sets(15, 25, seed);
    std::vector<std::uint32_t> perm(25);  // new column c holds old item perm[c]
    std::iota(perm.begin(), perm.end(), 0U);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::uint32_t> where(25);
    for (std::uint32_t c = 0; c < 25; ++c) where[perm[c]] = c;
    Matrix permuted(15, 25);
    for (std::uint32_t c = 0; c < 25; ++c) permuted.col(c) = scores.col(perm[c]);
    auto remap = [&](Lists lists) {
      for (auto& l : lists) {
        for (auto& v : l) v = where[v];
        std::sort(l.begin(), l.end());
      }
      return lists;
    };
    const auto base = rank_all(scores, masked, truth, kDefaultCutoffs);
    auto other = rank_all(permuted, remap(masked), remap(truth), kDefaultCutoffs);
    const auto mb = compute_metrics(base);
    const auto mo = compute_metrics(other);
    for (auto& l : other.ranked) {
      for (auto& v : l) v = perm[v];
    }
    EXPECT_EQ(base.ranked, other.ranked);
    for (int n : kDefaultCutoffs) {
      EXPECT_EQ(mb.recall.at(n), mo.recall.at(n)) << n;
      EXPECT_EQ(mb.ndcg.at(n), mo.ndcg.at(n)) << n;
    }
    EXPECT_EQ(mb.users_evaluated, mo.users_evaluated);
  }
}

TEST(Metrics, EmbeddingRankingEqualsScoreRanking) {
  const Matrix e = distinct_scores(12, 4, 3);  // 5 users, 7 items
  const auto [masked, truth] = random_sets(5, 7, 3);
  const auto a = rank_all_embeddings(e, 5, masked, truth, kDefaultCutoffs);
  const auto b = rank_all(score_all(e, 5), masked, truth, kDefaultCutoffs);
  EXPECT_EQ(a.ranked, b.ranked);
}

TEST(Metrics, JsonRoundTripAndTable) {
  MetricsReport m;
  m.recall = {{5, 0.125}, {10, 0.25}, {20, 0.5}};
  m.ndcg = {{5, 0.1}, {10, 0.2}, {20, 0.3}};
  m.users_evaluated = 17;
  const auto json = metrics_to_json(m);
  EXPECT_NE(json.find("\"recall\""), std::string::npos);
  EXPECT_EQ(metrics_from_json(json), m);
  EXPECT_THROW(metrics_from_json("{"), DataError);
  std::ostringstream out;
  print_metrics_table(out, m);
  EXPECT_NE(out.str().find("0.5000"), std::string::npos);
  EXPECT_NE(out.str().find("users evaluated: 17"), std::string::npos);
}

TEST(EvaluateSplit, TestStageMasksTrainAndValidation) {
  // One user: train {0}, validation {1}, test {2}. The scores favour the
  // masked items, which must not appear.
  const auto set = testing::make_set(1, 5, {{0, 0}, {0, 1}, {0, 2}});
  SplitSet split{set.empty_like(), set.empty_like(), set.empty_like()};
  split.train.edges = {set.edges[0]};
  split.validation.edges = {set.edges[1]};
  split.test.edges = {set.edges[2]};
  Matrix scores(1, 5);
  scores << 9, 8, 1, 2, 0;
  const auto test = evaluate_split(scores, split, EvalStage::test);
  EXPECT_DOUBLE_EQ(test.recall.at(5), 1.0);
  EXPECT_NEAR(test.ndcg.at(5), 1.0 / std::log2(3.0), 1e-15);
  const auto val = evaluate_split(scores, split, EvalStage::validation);
  EXPECT_DOUBLE_EQ(val.ndcg.at(5), 1.0);
}

TEST(SemanticOnly, CosineScores) {
  SemanticStore s;
  s.user_ids = IdMap({"u0"});
  s.item_ids = IdMap({"i0", "i1"});
  s.users = Matrix(1, 2);
  s.users << 3, 4;
  s.items = Matrix(2, 2);
  s.items << 3, 4, -4, 3;
  const Matrix scores = semantic_only_scores(s);
  EXPECT_NEAR(scores(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(scores(0, 1), 0.0, 1e-15);
}

}  // namespace
}  // namespace semalign
