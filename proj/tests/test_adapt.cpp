#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace l2gp {
namespace {

using testing::randn;

TEST(Ttbn, ResetCopiesSourceStatistics) {
  DualHeadModel m = build_model(testing::tiny_spec());
  m.bn[0].mean[1] = 0.25;
  const TtbnState s = ttbn_reset(m, 0.3);
  EXPECT_EQ(s.target, m.bn);
  EXPECT_EQ(s.momentum, 0.3);
  EXPECT_EQ(s.batches_seen, 0u);
}

TEST(Ttbn, RepeatedBatchConvergesGeometrically) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  Rng rng(1);
  const Tensor x = randn({16, 4}, rng, 2.0);
  const BnStatistics batch = column_moments(x);
  TtbnState s = ttbn_reset(m, 0.1);
  for (int k = 1; k <= 30; ++k) {
    adapt_and_predict(m, s, x, 1);
    const double decay = std::pow(0.9, k);
    for (std::size_t j = 0; j < 4; ++j) {
      // Input layer: mu_k = mu_b + (1 - m)^k (mu_0 - mu_b).
      EXPECT_NEAR(s.target[0].mean[j], batch.mean[j] + decay * (0.0 - batch.mean[j]), 1e-12);
      EXPECT_NEAR(s.target[0].var[j], batch.var[j] + decay * (1.0 - batch.var[j]), 1e-12);
    }
  }
  EXPECT_EQ(s.batches_seen, 30u);
}

TEST(Ttbn, UnitMomentumUsesBatchStatistics) {
  const DualHeadModel m = build_model(testing::tiny_spec(4));
  Rng rng(2);
  const Tensor x = randn({12, 4}, rng);
  TtbnState s = ttbn_reset(m, 1.0);
  const Tensor adapted = adapt_and_predict(m, s, x, 2);
  const Tensor batch = predict(m, 2, features(m, x, m.W, BnContext::train_frozen())).value();
  for (std::size_t i = 0; i < adapted.size(); ++i) EXPECT_NEAR(adapted[i], batch[i], 1e-12);
}

TEST(Ttbn, NeverModifiesTheModel) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  const DualHeadModel before = m.clone();
  Rng rng(3);
  TtbnState s = ttbn_reset(m);
  for (int k = 0; k < 5; ++k) adapt_and_predict(m, s, randn({8, 4}, rng), 1);
  EXPECT_TRUE(testing::same_parameters(m, before));
  EXPECT_EQ(m.bn, before.bn);
}

TEST(Ttbn, SingleSampleBatchIsRejected) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  TtbnState s = ttbn_reset(m);
  EXPECT_THROW(adapt_and_predict(m, s, Tensor({1, 4}), 1), BatchSizeError);
  EXPECT_EQ(s.batches_seen, 0u);
}

Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds{randn({n, d}, rng), std::vector<int>(n), "random", ""};
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % 2);
  return ds;
}

TEST(Evaluate, UntrainedModelIsNearChance) {
  ModelSpec spec;
  const DualHeadModel m = build_model(spec);
  const Dataset ds = random_dataset(2048, spec.input_dim, 4);
  EXPECT_NEAR(evaluate(m, ds, EvalMode::kSourceStats, 1), 0.5, 0.05);
  EXPECT_NEAR(evaluate(m, ds, EvalMode::kTtbn, 1), 0.5, 0.05);
}

TEST(Evaluate, EmptyDatasetIsConfigError) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  Dataset empty{Tensor({0, 4}), {}, "empty", ""};
  EXPECT_THROW(evaluate(m, empty, EvalMode::kTtbn, 1), ConfigError);
}

TEST(Evaluate, SourceStatisticsIgnoreOrder) {
  const DualHeadModel m = build_model(testing::tiny_spec(5));
  const Dataset ds = random_dataset(300, 4, 6);
  Dataset rev = ds;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t k = ds.size() - 1 - i;
    rev.labels[i] = ds.labels[k];
    for (std::size_t j = 0; j < 4; ++j) rev.features[i * 4 + j] = ds.features[k * 4 + j];
  }
  EXPECT_EQ(evaluate(m, ds, EvalMode::kSourceStats, 1), evaluate(m, rev, EvalMode::kSourceStats, 1));
}

TEST(Evaluate, TtbnCountsBatchesAndWarmup) {
  const DualHeadModel m = build_model(testing::tiny_spec());
  const Dataset ds = random_dataset(130, 4, 7);
  EvalOptions o;
  o.batch_size = 64;
  EXPECT_EQ(evaluate_detailed(m, ds, EvalMode::kTtbn, 1, o).batches_seen, 3u);  // 64 + 64 + 2
  o.batch_size = 32;
  o.warmup_batches = 5;
  EXPECT_EQ(evaluate_detailed(m, ds, EvalMode::kTtbn, 1, o).batches_seen, 5u + 5u);
  o.batch_size = 1;
  EXPECT_THROW(evaluate(m, ds, EvalMode::kTtbn, 1, o), ConfigError);
}

class TrainedModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ShortcutSpec s;
    s.n_train = 1024;
    s.n_val = 256;
    s.n_test = 1024;
    spec_ = s;
    data_ = new SourceSplits(gen_source(s));
    TrainConfig c;
    c.variant = Variant::kErm;
    c.epochs = 3;
    c.lr_drop_epoch = 2;
    c.lr = 0.05;
    c.batch_size = 32;
    ModelSpec ms;
    ms.hidden = {16};
    model_ = new DualHeadModel(train(c, ms, data_->train, data_->val).best_model);
  }
  static void TearDownTestSuite() {
    delete data_;
    delete model_;
  }
  static ShortcutSpec spec_;
  static SourceSplits* data_;
  static DualHeadModel* model_;
};

ShortcutSpec TrainedModel::spec_;
SourceSplits* TrainedModel::data_ = nullptr;
DualHeadModel* TrainedModel::model_ = nullptr;

TEST_F(TrainedModel, SameDistributionTtbnMatchesSourceStatistics) {
  const double src = evaluate(*model_, data_->test, EvalMode::kSourceStats, 1);
  const double tt = evaluate(*model_, data_->test, EvalMode::kTtbn, 1);
  EXPECT_GT(src, 0.95);
  EXPECT_NEAR(tt, src, 0.03);
}

TEST_F(TrainedModel, TtbnUndoesAffineShift) {
  ShiftSpec shift;
  shift.correlation = 1.0;
  shift.seed = 5;
  const Dataset target = gen_target(spec_, shift);
  EvalOptions o;
  o.warmup_batches = 50;
  const double src = evaluate(*model_, data_->test, EvalMode::kSourceStats, 1);
  EXPECT_NEAR(evaluate(*model_, target, EvalMode::kTtbn, 1, o), src, 0.05);
}

}  // namespace
}  // namespace l2gp
