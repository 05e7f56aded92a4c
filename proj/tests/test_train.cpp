#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "penex/dataset.hpp"
#include "penex/losses.hpp"
#include "penex/train.hpp"

namespace penex {
namespace {

Dataset two_points() {
  Dataset d;
  d.n = 2;
  d.d = 2;
  d.features = {-1.0, 0.0, 1.0, 0.0};
  d.labels = {0, 1};
  d.num_classes = 2;
  return d;
}

TrainConfig linear_config(LossKind kind, double lr) {
  TrainConfig c;
  c.loss.kind = kind;
  c.model.input_dim = 2;
  c.model.num_classes = 2;
  c.optim.learning_rate = lr;
  c.epochs = 20;
  c.batch_size = 32;
  c.seed = 5;
  return c;
}

TEST(Train, ZeroEpochsRecordsOnlyInitialEvaluation) {
  TrainConfig c = linear_config(LossKind::kCrossEntropy, 1e-3);
  c.epochs = 0;
  const Dataset d = gen_blobs(40, 2, 2, 0.5, 1);
  const RunReport r = train(c, d, d);
  ASSERT_EQ(r.epochs.size(), 1u);
  EXPECT_EQ(r.epochs[0].epoch, 0);
  EXPECT_TRUE(r.steps.empty());
}

TEST(Train, CrossEntropySeparatesTwoPoints) {
  TrainConfig c = linear_config(LossKind::kCrossEntropy, 0.05);
  c.epochs = 200;
  c.batch_size = 2;
  const Dataset d = two_points();
  const RunReport r = train(c, d, d);
  EXPECT_EQ(r.epochs.back().train.acc, 1.0);
}

TEST(Train, RawExponentialLossGrowsLogits) {
  TrainConfig c = linear_config(LossKind::kEx, 0.05);
  c.loss.alpha = 1.0;
  c.epochs = 1000;
  c.batch_size = 2;
  const Dataset d = two_points();
  const RunReport r = train(c, d, d);
  EXPECT_GT(r.epochs.back().mean_abs_logit, 10 * r.epochs.front().mean_abs_logit);
  EXPECT_GT(r.epochs.back().mean_abs_logit, r.epochs[r.epochs.size() / 2].mean_abs_logit);
}

TEST(Train, FirstAdaptiveRhoIsClippedBatchEstimate) {
  TrainConfig c = linear_config(LossKind::kPenex, 1e-3);
  c.loss.alpha = 0.3;
  const Dataset d = gen_blobs(2, 2, 2, 0.5, 8);
  const Parameters init = init_model(c.model, 3);

  // Replay the controller's first iteration by hand.
  const Tensor logits = forward(c.model, init, d.feature_tensor());
  double ex = 0, se = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    ex += std::exp(-c.loss.alpha * logits.data()[i * 2 + d.labels[i]]) / 2;
    se += (std::exp(logits.data()[i * 2]) + std::exp(logits.data()[i * 2 + 1])) / 2;
  }
  const double expected =
      std::clamp(c.loss.alpha * ex / (se + 1e-12), c.penalty.rho_min, c.penalty.rho_max);

  TrainState state(c, init.clone());
  const StepLog log = train_step(c, state, d.feature_tensor(), d.labels);
  ASSERT_TRUE(log.rho.has_value());
  EXPECT_NEAR(*log.rho, expected, 1e-14 * expected);
}

TEST(Train, ClipBoundsReachTheFirstStep) {
  TrainConfig c = linear_config(LossKind::kPenex, 1e-3);
  c.penalty.rho_min = 5.0;
  c.penalty.rho_max = 6.0;
  const Dataset d = gen_blobs(8, 2, 2, 0.5, 8);
  TrainState state(c, init_model(c.model, 3));
  EXPECT_EQ(*train_step(c, state, d.feature_tensor(), d.labels).rho, 5.0);
}

TEST(Train, SmallPenexStepDecreasesBatchLoss) {
  std::mt19937_64 rng(99);
  const Dataset pool = gen_blobs(2000, 3, 4, 0.8, 12);
  TrainConfig c;
  c.loss.kind = LossKind::kPenex;
  c.loss.alpha = 0.5;
  c.loss.rho = 0.05;
  c.model.input_dim = 4;
  c.model.num_classes = 3;
  c.optim.kind = OptimKind::kSgd;
  c.optim.learning_rate = 1e-4;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> idx(16);
    for (auto& i : idx) i = std::uniform_int_distribution<std::size_t>(0, pool.n - 1)(rng);
    const Dataset batch = pool.subset(idx);
    const Tensor x = batch.feature_tensor();
    TrainState state(c, init_model(c.model, static_cast<std::uint64_t>(t)));
    const double before =
        penex_loss(forward(c.model, state.params, x), batch.labels, 0.5, 0.05).item();
    train_step(c, state, x, batch.labels);
    const double after =
        penex_loss(forward(c.model, state.params, x), batch.labels, 0.5, 0.05).item();
    EXPECT_LT(after, before) << "batch " << t;
  }
}

TEST(Train, DivergedStepLeavesParametersUntouched) {
  TrainConfig c = linear_config(LossKind::kEx, 1e-2);
  c.loss.alpha = 1.0;
  Parameters p = init_model(c.model, 0);
  std::vector<double> flat = p.flatten();
  for (double& v : flat) v = 1e6;
  p.assign(flat);
  TrainState state(c, p.clone());
  const Tensor x = Tensor::matrix({{-1e4, -1e4}});
  const StepLog log = train_step(c, state, x, Labels{0});
  EXPECT_TRUE(log.diverged);
  EXPECT_EQ(state.params.flatten(), flat);
}

TEST(Train, DeterministicForFixedSeed) {
  TrainConfig c = linear_config(LossKind::kPenex, 1e-2);
  c.model.hidden_dims = {8};
  const Dataset d = gen_blobs(120, 2, 2, 0.6, 4);
  const RunReport a = train(c, d, d), b = train(c, d, d);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].loss, b.steps[i].loss);
    EXPECT_EQ(a.steps[i].rho, b.steps[i].rho);
  }
  EXPECT_EQ(a.final_params.flatten(), b.final_params.flatten());
}

TEST(Train, AdaptiveRhoStaysWithinBounds) {
  TrainConfig c = linear_config(LossKind::kPenex, 5e-2);
  c.epochs = 40;
  const Dataset d = gen_blobs(200, 2, 2, 0.3, 6);
  const RunReport r = train(c, d, d);
  for (const StepLog& s : r.steps) {
    ASSERT_TRUE(s.rho.has_value());
    EXPECT_GE(*s.rho, c.penalty.rho_min);
    EXPECT_LE(*s.rho, c.penalty.rho_max);
  }
  for (const EpochRecord& e : r.epochs) EXPECT_TRUE(e.rho.has_value());
}

TEST(Train, HardConstraintRunKeepsRowsOnSurface) {
  TrainConfig c = linear_config(LossKind::kConexHard, 1e-2);
  c.loss.alpha = 1.0;
  c.model.num_classes = 3;
  c.model.hidden_dims = {8};
  const Dataset d = gen_blobs(90, 3, 2, 0.5, 2);
  const RunReport r = train(c, d, d);
  for (const EpochRecord& e : r.epochs) EXPECT_LT(e.max_abs_row_sum, 1e-5);
}

TEST(Predict, PenexUsesRescaledSoftmax) {
  LossSpec s;
  s.alpha = 1.0;
  const Tensor p = predict_probs(s, Tensor::matrix({{std::log(2.0), 0.0}}));
  EXPECT_NEAR(p.data()[0], 0.8, 1e-15);
  s.kind = LossKind::kCrossEntropy;
  EXPECT_NEAR(predict_probs(s, Tensor::matrix({{std::log(2.0), 0.0}})).data()[0], 2.0 / 3, 1e-15);
}

}  // namespace
}  // namespace penex
