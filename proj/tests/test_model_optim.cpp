#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "penex/errors.hpp"
#include "penex/model.hpp"
#include "penex/optim.hpp"

namespace penex {
namespace {

Tensor random_inputs(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<double> x(n * d);
  for (double& v : x) v = g(rng);
  return Tensor::matrix(n, d, x);
}

TEST(Model, ParameterCountOfSmallMlp) {
  ModelSpec spec;
  spec.input_dim = 2;
  spec.hidden_dims = {8};
  spec.num_classes = 2;
  EXPECT_EQ(init_model(spec, 0).count(), 42u);
}

TEST(Model, LinearShapes) {
  ModelSpec spec;
  spec.input_dim = 5;
  spec.num_classes = 3;
  const Parameters p = init_model(spec, 1);
  ASSERT_EQ(p.weights.size(), 1u);
  EXPECT_EQ(p.weights[0].rows(), 3u);
  EXPECT_EQ(p.weights[0].cols(), 5u);
  const Tensor out = forward(spec, p, random_inputs(7, 5, 2));
  EXPECT_EQ(out.rows(), 7u);
  EXPECT_EQ(out.cols(), 3u);
}

TEST(Model, InitIsSeededAndBounded) {
  ModelSpec spec;
  spec.input_dim = 4;
  spec.hidden_dims = {16, 8};
  spec.num_classes = 3;
  EXPECT_EQ(init_model(spec, 5).flatten(), init_model(spec, 5).flatten());
  EXPECT_NE(init_model(spec, 5).flatten(), init_model(spec, 6).flatten());
  const Parameters p = init_model(spec, 5);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.weights[l].cols()));
    for (double w : p.weights[l].data()) EXPECT_LE(std::abs(w), bound);
    for (double b : p.biases[l].data()) EXPECT_EQ(b, 0.0);
  }
}

TEST(Model, FlattenAssignRoundTrip) {
  ModelSpec spec;
  spec.hidden_dims = {3};
  Parameters p = init_model(spec, 3);
  std::vector<double> flat = p.flatten();
  for (double& v : flat) v += 1.0;
  p.assign(flat);
  EXPECT_EQ(p.flatten(), flat);
  Parameters q = p.clone();
  flat[0] = 42.0;
  p.assign(flat);
  EXPECT_NE(q.flatten()[0], 42.0);
}

TEST(Model, HardConstraintRowsSumToZero) {
  ModelSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = {10};
  spec.num_classes = 4;
  spec.conex_hard = true;
  EXPECT_EQ(spec.output_units(), 3u);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor out = forward(spec, init_model(spec, seed), random_inputs(50, 3, seed + 100));
    ASSERT_EQ(out.cols(), 4u);
    for (std::size_t i = 0; i < out.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += out.data()[i * 4 + j];
      EXPECT_LT(std::abs(s), 1e-5);
    }
  }
}

TEST(Model, RejectsBadSpec) {
  ModelSpec spec;
  spec.num_classes = 1;
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.num_classes = 2;
  spec.dropout_p = 1.0;
  EXPECT_THROW(spec.validate(), ParameterError);
}

TEST(Optimizer, SgdStepOnSquare) {
  Parameters p;
  p.weights = {Tensor::matrix({{1.0}})};
  p.biases = {Tensor::vector({0.0})};
  OptimSpec spec;
  spec.kind = OptimKind::kSgd;
  spec.learning_rate = 0.1;
  Optimizer opt(spec, p);
  const double theta = p.weights[0].data()[0];
  opt.step(p, Gradients{{2 * theta}, {0.0}});
  EXPECT_DOUBLE_EQ(p.weights[0].data()[0], 0.8);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  Parameters p;
  p.weights = {Tensor::matrix({{1.0, -1.0}})};
  p.biases = {Tensor::vector({0.0})};
  OptimSpec spec;
  spec.learning_rate = 0.01;
  Optimizer opt(spec, p);
  opt.step(p, Gradients{{3.0, -0.5}, {0.0}});
  EXPECT_NEAR(p.weights[0].data()[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p.weights[0].data()[1], -1.0 + 0.01, 1e-9);
  EXPECT_EQ(p.biases[0].data()[0], 0.0);
}

TEST(Optimizer, ValueClipping) {
  Gradients g{{9.0, -9.0, 2.0}};
  clip_gradients(g, 5.0, ClipMode::kValue);
  EXPECT_EQ(g[0], (std::vector<double>{5.0, -5.0, 2.0}));
}

TEST(Optimizer, GlobalNormClipping) {
  Gradients g{{3.0}, {4.0}};
  EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
  clip_gradients(g, 1.0, ClipMode::kGlobalNorm);
  EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
  EXPECT_NEAR(g[0][0] / g[1][0], 0.75, 1e-15);
}

TEST(Optimizer, KindNamesRoundTrip) {
  for (OptimKind k : {OptimKind::kSgd, OptimKind::kAdam})
    EXPECT_EQ(optim_kind_from_string(to_string(k)), k);
  EXPECT_THROW(optim_kind_from_string("rmsprop"), ParameterError);
}

}  // namespace
}  // namespace penex
