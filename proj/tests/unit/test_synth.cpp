#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/eval/metrics.hpp"
#include "oracles.hpp"
#include "semalign/synth/synth.hpp"

namespace semalign {
namespace {

std::vector<double> ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0U);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  for (std::size_t k = 0; k < order.size(); ++k) r[order[k]] = static_cast<double>(k);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n - 1.0) / 2.0;
  double num = 0.0;
  double da = 0.0;
  double db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - mean) * (rb[i] - mean);
    da += (ra[i] - mean) * (ra[i] - mean);
    db += (rb[i] - mean) * (rb[i] - mean);
  }
  return num / std::sqrt(da * db);
}

std::uint32_t latent_index(const std::string& raw) { return static_cast<std::uint32_t>(std::stoul(raw.substr(1))); }

TEST(Synth, DefaultsMatchTheDeskScale) {
  const SynthConfig c;
  EXPECT_EQ(c.num_users, 300U);
  EXPECT_EQ(c.num_items, 200U);
  EXPECT_EQ(c.latent_dim, 8U);
  EXPECT_EQ(c.semantic_dim, 32U);
  EXPECT_DOUBLE_EQ(c.density, 0.02);
  EXPECT_DOUBLE_EQ(c.semantic_noise, 0.5);
}

TEST(Synth, InvalidConfigsAreRejected) {
  auto bad = [](auto mutate) {
    SynthConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), DataError);
  };
  bad([](SynthConfig& c) { c.num_users = 0; });
  bad([](SynthConfig& c) { c.latent_dim = 0; });
  bad([](SynthConfig& c) { c.semantic_noise = -0.1; });
  bad([](SynthConfig& c) { c.density = 0.0; });
  bad([](SynthConfig& c) { c.density = 1.0; });
}

TEST(Synth, EdgeCountTracksTheDensityTarget) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig c;
    c.seed = seed;
    const auto n = static_cast<double>(generate(c).interactions.edges.size());
    EXPECT_GE(n, 1080.0) << seed;
    EXPECT_LE(n, 1320.0) << seed;
  }
}

TEST(Synth, CalibratedBiasHitsTheMeanProbability) {
  SynthConfig c;
  c.seed = 3;
  const auto d = generate(c);
  EXPECT_NEAR(planted_probabilities(d.latents).mean(), 0.02, 1e-6);
}

TEST(Synth, SameSeedSameOutput) {
  SynthConfig c;
  c.seed = 9;
  const auto a = generate(c);
  const auto b = generate(c);
  EXPECT_EQ(testing::raw_edges_equal(a.interactions, b.interactions), true);
  EXPECT_EQ(a.semantic.users, b.semantic.users);
  EXPECT_EQ(a.semantic.items, b.semantic.items);
  c.seed = 10;
  EXPECT_NE(generate(c).semantic.users, a.semantic.users);
}

TEST(Synth, StoreCoversEveryGeneratedEntity) {
  const auto d = generate(SynthConfig{});
  EXPECT_EQ(d.semantic.user_ids.size(), 300U);
  EXPECT_EQ(d.semantic.item_ids.size(), 200U);
  EXPECT_EQ(d.semantic.dim(), 32U);
  EXPECT_LE(d.interactions.users.size(), 300U);
}

TEST(Synth, NoiselessSemanticsRankLikeThePlantedModel) {
  SynthConfig c;
  c.semantic_noise = 0.0;
  c.seed = 4;
  const auto d = generate(c);
  const Matrix probs = planted_probabilities(d.latents);
  const Matrix sem = semantic_only_scores(d.semantic);
  std::vector<double> rhos;
  for (Eigen::Index u = 0; u < probs.rows(); ++u) {
    rhos.push_back(spearman({probs.row(u).begin(), probs.row(u).end()}, {sem.row(u).begin(), sem.row(u).end()}));
  }
  const double n = static_cast<double>(rhos.size());
  const double mean = std::accumulate(rhos.begin(), rhos.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rhos) var += (r - mean) * (r - mean);
  const double se = std::sqrt(var / (n - 1.0) / n);
  EXPECT_GT(mean, 0.0);
  EXPECT_GT(mean / se, 5.0);
}

TEST(Synth, SecondEraSharesEntitiesButNotEdges) {
  const auto d = generate(SynthConfig{});
  const auto era2 = sample_interactions(d.latents, 77);
  EXPECT_NE(testing::raw_edges_equal(d.interactions, era2), true);
  for (const auto& raw : era2.users.raws()) EXPECT_LT(latent_index(raw), 300U);
  EXPECT_NEAR(static_cast<double>(era2.edges.size()), 1200.0, 120.0);
}

TEST(Synth, TrainedModelsStayBelowThePlantedCeiling) {
  const auto run = testing::synthetic_run(2);
  const Matrix probs = planted_probabilities(run.data.latents);
  const auto& users = run.split.train.users;
  const auto& items = run.split.train.items;
  Matrix oracle(static_cast<Eigen::Index>(users.size()), static_cast<Eigen::Index>(items.size()));
  for (std::uint32_t u = 0; u < users.size(); ++u) {
    for (std::uint32_t v = 0; v < items.size(); ++v) {
      oracle(u, v) = probs(latent_index(users.raw(u)), latent_index(items.raw(v)));
    }
  }
  const double ceiling = evaluate_split(oracle, run.split, EvalStage::test).recall.at(20);
  for (auto mode : {TrainMode::base, TrainMode::con}) {
    const auto r = Trainer(run.split, &run.semantic, testing::experiment_config(mode, 2)).fit();
    EXPECT_LE(test_metrics(run.split, r.table, BackboneConfig{}).recall.at(20), ceiling + 0.05);
  }
}

TEST(Synth, NoisierSemanticsHelpLess) {
  // Mean Recall@20 gain of contrastive alignment over base, 5 seeds per level.
  std::vector<double> gains;
  for (double noise : {0.5, 2.0, 8.0}) {
    double gain = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SynthConfig c;
      c.semantic_noise = noise;
      const auto run = testing::synthetic_run(seed, c);
      const auto base = Trainer(run.split, nullptr, testing::experiment_config(TrainMode::base, seed)).fit();
      const auto con = Trainer(run.split, &run.semantic, testing::experiment_config(TrainMode::con, seed)).fit();
      gain += test_metrics(run.split, con.table, BackboneConfig{}).recall.at(20) -
              test_metrics(run.split, base.table, BackboneConfig{}).recall.at(20);
    }
    gains.push_back(gain / 5.0);
  }
  EXPECT_GT(gains[0], gains[1]);
  EXPECT_GT(gains[1], gains[2]);
}

TEST(GaussianPairs, ClosedFormMutualInformation) {
  EXPECT_DOUBLE_EQ(oracle_mi_gaussian_pairs(10, 3, 0.0, 1).true_mi, 0.0);
  const auto p = oracle_mi_gaussian_pairs(10, 4, 0.9, 1);
  EXPECT_NEAR(p.true_mi, -2.0 * std::log(0.19), 1e-12);
  EXPECT_NEAR(p.true_mi, 3.3214624, 1e-7);
  EXPECT_THROW(oracle_mi_gaussian_pairs(10, 4, 1.0, 1), DataError);
}

TEST(GaussianPairs, SampleCorrelationIsNearRho) {
  const std::size_t n = 4000;
  for (double rho : {0.0, 0.5, 0.9}) {
    const auto p = oracle_mi_gaussian_pairs(n, 4, rho, 7);
    for (Eigen::Index k = 0; k < 4; ++k) {
      const auto a = p.first.col(k).array() - p.first.col(k).mean();
      const auto b = p.second.col(k).array() - p.second.col(k).mean();
      const double r = (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
      EXPECT_NEAR(r, rho, 3.0 / std::sqrt(static_cast<double>(n)));
    }
  }
}

}  // namespace
}  // namespace semalign
