#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "semalign/align/losses.hpp"
#include "semalign/backbone/checkpoint.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/optim/adam.hpp"
#include "semalign/common/random.hpp"
#include "semalign/optim/trainer.hpp"

namespace semalign {
namespace {

using testing::experiment_config;
using testing::synthetic_run;

// ------------------------------------------------------------------ Adam

double adam_run(std::vector<double> grads, AdamConfig cfg, double start = 0.0) {
  Adam adam(cfg);
  std::vector<double> value{start};
  std::vector<double> grad{0.0};
  for (double g : grads) {
    grad[0] = g;
    const ParamSlot slot{value, grad};
    adam.step(std::span<const ParamSlot>(&slot, 1));
  }
  return value[0];
}

TEST(Adam, ZeroGradientIsANoOpButCountsTheStep) {
  Adam adam;
  std::vector<double> value{1.5, -2.0};
  const std::vector<double> grad{0.0, 0.0};
  const ParamSlot slot{value, grad};
  adam.step(std::span<const ParamSlot>(&slot, 1));
  EXPECT_EQ(value, (std::vector<double>{1.5, -2.0}));
  EXPECT_EQ(adam.steps(), 1U);
}

TEST(Adam, FirstStepMovesByTheLearningRate) {
  // Bias correction gives m_hat = v_hat = 1, so the step is lr / (1 + eps).
  AdamConfig cfg;
  cfg.lr = 0.1;
  EXPECT_NEAR(adam_run({1.0}, cfg), -0.1, 1e-8);
  EXPECT_DOUBLE_EQ(adam_run({1.0}, cfg), -0.1 / (1.0 + 1e-8));
}

TEST(Adam, TwoConstantStepsMatchTheHandTrace) {
  // Step 2: m = 0.19, v = 0.001999, m_hat = 0.19 / 0.19, v_hat = 0.001999 / 0.001999.
  AdamConfig cfg;
  cfg.lr = 0.1;
  const double expected = -2.0 * 0.1 / (1.0 + 1e-8);
  EXPECT_NEAR(adam_run({1.0, 1.0}, cfg), expected, 1e-15);
  const auto trace = testing::adam_scalar_trace(0.0, {1.0, 1.0}, 0.1, 0.9, 0.999, 1e-8);
  EXPECT_NEAR(trace[1], expected, 1e-15);
}

TEST(Adam, MatchesTheScalarRecurrenceOnVaryingGradients) {
  AdamConfig cfg;
  cfg.lr = 0.05;
  const std::vector<double> grads{0.3, -1.2, 2.5, 0.0, -0.7, 4.0, 1e-3};
  const auto trace = testing::adam_scalar_trace(0.4, grads, 0.05, 0.9, 0.999, 1e-8);
  EXPECT_NEAR(adam_run(grads, cfg, 0.4), trace.back(), 1e-14);
}

TEST(Adam, NonFiniteGradientLeavesParametersUntouched) {
  Adam adam;
  std::vector<double> value{1.0, 2.0};
  const std::vector<double> grad{0.5, std::nan("")};
  const ParamSlot slot{value, grad};
  EXPECT_THROW(adam.step(std::span<const ParamSlot>(&slot, 1)), DivergenceError);
  EXPECT_EQ(value, (std::vector<double>{1.0, 2.0}));
}

TEST(Adam, ShapeChangesAreRejected) {
  Adam adam;
  std::vector<double> a{1.0};
  std::vector<double> g{1.0};
  const ParamSlot one{a, g};
  adam.step(std::span<const ParamSlot>(&one, 1));
  std::vector<double> b{1.0, 2.0};
  std::vector<double> gb{1.0, 1.0};
  const ParamSlot two{b, gb};
  EXPECT_THROW(adam.step(std::span<const ParamSlot>(&two, 1)), DataError);
}

// ------------------------------------------------------------------ config

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig d;
  EXPECT_DOUBLE_EQ(d.adam.lr, 1e-3);
  EXPECT_EQ(d.batch_size, 4096U);
  EXPECT_EQ(d.patience, 5);
  EXPECT_EQ(d.eval_every, 1);
  EXPECT_DOUBLE_EQ(d.mask_ratio, 0.1);
  EXPECT_EQ(d.dim, 32U);
  EXPECT_EQ(d.backbone.layers, 3);
  EXPECT_NO_THROW(d.validate());
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), DataError);
  };
  bad([](TrainConfig& c) { c.adam.lr = 0.0; });
  bad([](TrainConfig& c) { c.adam.beta1 = 1.0; });
  bad([](TrainConfig& c) { c.adam.beta2 = 0.0; });
  bad([](TrainConfig& c) { c.patience = 0; });
  bad([](TrainConfig& c) { c.tau = 0.0; });
  bad([](TrainConfig& c) { c.backbone.layers = -1; });
  EXPECT_EQ(mode_from_string("gen"), TrainMode::gen);
  EXPECT_THROW(mode_from_string("both"), DataError);
}

// ------------------------------------------------------------------ trainer

class TrainerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { run_ = new testing::SyntheticRun(synthetic_run(1)); }
  static void TearDownTestSuite() { delete run_; }
  static testing::SyntheticRun* run_;
};
testing::SyntheticRun* TrainerTest::run_ = nullptr;

TEST_F(TrainerTest, SemanticModesNeedAStore) {
  EXPECT_THROW(Trainer(run_->split, nullptr, experiment_config(TrainMode::con, 1)), DataError);
  EXPECT_THROW(Trainer(run_->split, nullptr, experiment_config(TrainMode::gen, 1)), DataError);
}

TEST_F(TrainerTest, IdenticalInputsGiveIdenticalRuns) {
  for (auto mode : {TrainMode::base, TrainMode::con, TrainMode::gen}) {
    auto cfg = experiment_config(mode, 3);
    cfg.max_epochs = 20;
    const auto a = Trainer(run_->split, &run_->semantic, cfg).fit();
    const auto b = Trainer(run_->split, &run_->semantic, cfg).fit();
    EXPECT_EQ(a.table.values, b.table.values);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
      EXPECT_EQ(a.log[i].loss_rec, b.log[i].loss_rec);
      EXPECT_EQ(a.log[i].loss_info, b.log[i].loss_info);
    }
  }
}

TEST_F(TrainerTest, ZeroLambdaReducesContrastiveToBase) {
  auto base_cfg = experiment_config(TrainMode::base, 2);
  base_cfg.max_epochs = 30;
  auto con_cfg = base_cfg;
  con_cfg.mode = TrainMode::con;
  con_cfg.lambda = 0.0;
  const auto base = Trainer(run_->split, nullptr, base_cfg).fit();
  const auto con = Trainer(run_->split, &run_->semantic, con_cfg).fit();
  EXPECT_EQ(base.table.values, con.table.values);
  EXPECT_EQ(base.best_validation, con.best_validation);
}

TEST_F(TrainerTest, ZeroMaskRatioReducesGenerativeToBase) {
  auto base_cfg = experiment_config(TrainMode::base, 2);
  base_cfg.max_epochs = 30;
  auto gen_cfg = base_cfg;
  gen_cfg.mode = TrainMode::gen;
  gen_cfg.mask_ratio = 0.0;
  const auto base = Trainer(run_->split, nullptr, base_cfg).fit();
  const auto gen = Trainer(run_->split, &run_->semantic, gen_cfg).fit();
  EXPECT_EQ(base.table.values, gen.table.values);
  for (const auto& l : gen.log) EXPECT_EQ(l.loss_info, 0.0);
}

TEST_F(TrainerTest, LogRecordsLossesAndTime) {
  auto cfg = experiment_config(TrainMode::con, 1);
  cfg.max_epochs = 12;
  const auto r = Trainer(run_->split, &run_->semantic, cfg).fit();
  ASSERT_FALSE(r.log.empty());
  for (const auto& l : r.log) {
    EXPECT_GT(l.loss_rec, 0.0);
    EXPECT_GT(l.loss_info, 0.0);
    EXPECT_GE(l.seconds, 0.0);
    EXPECT_EQ(l.recall20.has_value(), l.epoch % cfg.eval_every == 0);
  }
  std::ostringstream out;
  write_train_log(out, r.log);
  const auto text = out.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), r.log.size());
  EXPECT_NE(text.find("\"loss_rec\""), std::string::npos);
  EXPECT_NE(text.find("\"sec\""), std::string::npos);
}

TEST_F(TrainerTest, LossDecreases) {
  for (auto mode : {TrainMode::base, TrainMode::con, TrainMode::gen}) {
    auto cfg = experiment_config(mode, 4);
    cfg.max_epochs = 40;
    cfg.patience = 1000;
    Trainer trainer(run_->split, &run_->semantic, cfg);
    std::vector<double> losses;
    for (int e = 0; e < 40; ++e) {
      const auto l = trainer.run_epoch();
      losses.push_back(total_loss(l.loss_rec, l.loss_info, cfg.lambda));
    }
    auto median5 = [](std::vector<double> v) {
      std::nth_element(v.begin(), v.begin() + 2, v.end());
      return v[2];
    };
    EXPECT_GT(median5({losses.begin(), losses.begin() + 5}), median5({losses.end() - 5, losses.end()}));
  }
}

TEST_F(TrainerTest, FitRestoresTheBestValidationRound) {
  auto cfg = experiment_config(TrainMode::base, 5);
  cfg.eval_every = 2;
  cfg.patience = 3;
  Trainer trainer(run_->split, nullptr, cfg);
  const auto r = trainer.fit();
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& l : r.log) {
    if (l.recall20 && *l.recall20 > best) {
      best = *l.recall20;
      best_epoch = l.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  // The last logged round is not the best one, yet the restored parameters
  // reproduce the best round's validation metrics.
  EXPECT_NE(r.log.back().epoch, best_epoch);
  EXPECT_EQ(trainer.evaluate(EvalStage::validation), r.best_validation);
  EXPECT_EQ(trainer.table().values, r.table.values);
  EXPECT_DOUBLE_EQ(r.best_validation.recall.at(20), best);
}

TEST(Trainer, ContrastiveBeatsBaseOnPlantedData) {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto run = synthetic_run(seed);
    const auto base = Trainer(run.split, nullptr, experiment_config(TrainMode::base, seed)).fit();
    const auto con = Trainer(run.split, &run.semantic, experiment_config(TrainMode::con, seed)).fit();
    if (con.best_validation.recall.at(20) > base.best_validation.recall.at(20)) ++wins;
  }
  EXPECT_GE(wins, 4);
}

// ------------------------------------------------------------------ checkpoint init

TEST(InitFromCheckpoint, CopiesKnownRowsAndDrawsTheRest) {
  testing::TempDir dir("init");
  const auto run = synthetic_run(2);
  const auto& users = run.split.train.users;
  const auto& items = run.split.train.items;
  auto table = EmbeddingTable::random(users.size(), items.size(), 8, 0.1, 1);
  table.values = table.values.cast<float>().cast<double>();
  // Drop the last item from the checkpoint.
  IdMap fewer_items(std::vector<std::string>(items.raws().begin(), items.raws().end() - 1));
  EmbeddingTable partial{users.size(), items.size() - 1, Matrix(table.values.rows() - 1, 8)};
  partial.values.topRows(partial.values.rows() - 1) = table.values.topRows(table.values.rows() - 2);
  partial.values.bottomRows(1) = table.mask_row();
  save_checkpoint(dir / "c.bin", partial, users, fewer_items);

  const auto init = init_from_checkpoint(dir / "c.bin", users, items, 8, 0.1, 42);
  const auto fresh = EmbeddingTable::random(users.size(), items.size(), 8, 0.1, 42);
  const auto missing = static_cast<Eigen::Index>(users.size() + items.size() - 1);
  EXPECT_EQ(init.values.topRows(missing), table.values.topRows(missing));
  EXPECT_EQ(Matrix(init.values.row(missing)), Matrix(fresh.values.row(missing)));
  EXPECT_EQ(Matrix(init.mask_row()), Matrix(table.mask_row()));
  EXPECT_THROW(init_from_checkpoint(dir / "c.bin", users, items, 16, 0.1, 42), DataError);
}

TEST(InitFromCheckpoint, PretrainingOnAnEarlierEraHelps) {
  // Era 1 pretrains; era 2 is an independent draw from the same latents.
  const auto run = synthetic_run(3);
  testing::TempDir dir("pretrain");
  const auto pre = Trainer(run.split, nullptr, experiment_config(TrainMode::base, 3)).fit();
  save_checkpoint(dir / "pre.bin", pre.table, run.split.train.users, run.split.train.items);
  const auto era2 = sample_interactions(run.data.latents, derive_seed(3, "era2"));
  const auto split2 = split_interactions(era2, {}, 3);
  const auto cfg = experiment_config(TrainMode::base, 3);
  const auto cold = Trainer(split2, nullptr, cfg).fit();
  const auto warm = Trainer(split2, nullptr, cfg,
                            init_from_checkpoint(dir / "pre.bin", split2.train.users, split2.train.items, cfg.dim,
                                                 cfg.init_std, cfg.seed))
                        .fit();
  EXPECT_GT(test_metrics(split2, warm.table, cfg.backbone).recall.at(20),
            test_metrics(split2, cold.table, cfg.backbone).recall.at(20));
}

}  // namespace
}  // namespace semalign
