#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "penex/losses.hpp"
#include "penex/verification.hpp"

namespace penex {
namespace {

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t k) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(k);
  double s = 0;
  for (double& v : p) s += (v = e(rng));
  for (double& v : p) v /= s;
  return p;
}

std::vector<double> rescaled_softmax(const std::vector<double>& f, double alpha) {
  double z = 0;
  for (double v : f) z += std::exp((1 + alpha) * v);
  std::vector<double> p;
  for (double v : f) p.push_back(std::exp((1 + alpha) * v) / z);
  return p;
}

TEST(FisherClosedForm, Example) {
  const std::vector<double> p{0.8, 0.2};
  const auto f = fisher_closed_form(p, 0.1, 0.05);
  EXPECT_NEAR(f[0], std::log(0.1 * 0.8 / 0.05) / 1.1, 1e-15);
  EXPECT_NEAR(f[0], 0.427276, 1e-6);
  EXPECT_NEAR(f[1], -0.832992, 1e-6);
  const auto q = rescaled_softmax(f, 0.1);
  EXPECT_NEAR(q[0], 0.8, 1e-14);
  EXPECT_NEAR(q[1], 0.2, 1e-14);
}

TEST(FisherClosedForm, ZeroProbabilityGoesToMinusInfinity) {
  const std::vector<double> p{1.0, 0.0};
  const auto f = fisher_closed_form(p, 0.5, 1.0);
  EXPECT_TRUE(std::isinf(f[1]) && f[1] < 0);
  const auto n = fisher_numeric(p, 0.5, 1.0, 1e-12);
  EXPECT_TRUE(n.diverging[1]);
  EXPECT_NEAR(n.logits[0], f[0], 1e-8);
}

TEST(FisherNumeric, AgreesWithClosedFormOnRandomSimplexes) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> a(0.05, 3.0), r(0.01, 2.0);
  for (int t = 0; t < 100; ++t) {
    const auto p = random_simplex(rng, 2 + t % 5);
    const double alpha = a(rng), rho = r(rng);
    const auto cf = fisher_closed_form(p, alpha, rho);
    const auto num = fisher_numeric(p, alpha, rho, 1e-12);
    ASSERT_TRUE(num.converged);
    for (std::size_t j = 0; j < p.size(); ++j) EXPECT_NEAR(num.logits[j], cf[j], 1e-8);
  }
}

TEST(FisherClosedForm, RescaledSoftmaxRecoversProbabilities) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const auto p = random_simplex(rng, 3);
    const auto q = rescaled_softmax(fisher_closed_form(p, 0.7, 0.3), 0.7);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(q[j], p[j], 1e-12);
  }
}

TEST(ConfidencePenalty, MinimiserIsBiasedTowardUniform) {
  const std::vector<double> p{0.8, 0.2};
  for (double lambda : {0.1, 0.5, 1.0}) {
    const auto q = conf_penalty_minimizer(p, lambda);
    EXPECT_GT(std::abs(q[0] - 0.8), 0.01);
    EXPECT_LT(q[0], 0.8);
    EXPECT_NEAR(q[0] + q[1], 1.0, 1e-12);
  }
}

TEST(ConfidencePenalty, StationarityHolds) {
  const std::vector<double> p{0.6, 0.3, 0.1};
  const double lambda = 0.5;
  const auto q = conf_penalty_minimizer(p, lambda);
  const double c0 = p[0] / q[0] - lambda * std::log(q[0]);
  for (std::size_t j = 1; j < 3; ++j) EXPECT_NEAR(p[j] / q[j] - lambda * std::log(q[j]), c0, 1e-8);
}

TEST(ConfidencePenalty, UniformIsFixedPoint) {
  const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
  for (double v : conf_penalty_minimizer(p, 0.7)) EXPECT_NEAR(v, 0.25, 1e-8);
}

TEST(MarginBound, ZeroMarginIdentity) {
  // At gamma = 0 the bound is rho^{-a} * PENEX, a = alpha / (alpha + 1).
  const double a = 0.5 / 1.5;
  EXPECT_NEAR(margin_bound_rhs(0.0, 0.5, 0.2, 1.3), std::pow(0.2, -a) * 1.3, 1e-14);
  EXPECT_NEAR(margin_bound_rhs(1.0, 0.5, 0.2, 1.3), std::exp(a) * std::pow(0.2, -a) * 1.3, 1e-14);
}

TEST(MarginBound, HoldsForRandomLogits) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 2.0);
  const std::size_t n = 300, k = 3;
  std::vector<double> f(n * k);
  for (double& v : f) v = g(rng);
  Labels y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % k);
  const std::vector<double> gammas{0.0, 0.1, 0.5, 1.0, 2.0};
  const BoundCheck c = check_margin_bound(Tensor::matrix(n, k, f), y, 0.5, 0.1, gammas);
  EXPECT_TRUE(c.all_hold());
  EXPECT_NEAR(c.penex_value, penex_loss(Tensor::matrix(n, k, f), y, 0.5, 0.1).item(), 1e-12);
  for (std::size_t i = 1; i < gammas.size(); ++i)
    EXPECT_GE(c.empirical_freq[i], c.empirical_freq[i - 1]);
}

TEST(OptimalRho, ClosedFormMatchesNumericMinimiser) {
  for (double alpha : {0.1, 1.0, 3.2}) {
    const RhoOptimality r = check_optimal_rho(alpha, 0.7, 2.5, 0.3);
    EXPECT_NEAR(r.closed_form, alpha * 0.7 / 2.5, 1e-12);
    EXPECT_TRUE(r.within_grid_cell);
    EXPECT_LT(r.relative_error, 1e-6);
  }
}

TEST(GradientCheck, AllLossesPass) {
  for (const LossGradientReport& r : check_loss_gradients(5, 4))
    EXPECT_LT(r.max_rel_error, 1e-4) << r.loss;
}

TEST(WeakLearnerDirection, NoCandidatesIsInconclusive) {
  ModelSpec spec;
  const Dataset d = gen_blobs(20, 2, 2, 0.5, 1);
  const Parameters p = init_model(spec, 0);
  const std::vector<double> etas{1e-1, 1e-2};
  DirectionSearchOptions opt;
  opt.random_directions = 0;
  const DirectionCheck c = check_weak_learner_direction(spec, p, d, 0.1, etas, opt);
  ASSERT_EQ(c.points.size(), 2u);
  for (const auto& pt : c.points) EXPECT_TRUE(pt.inconclusive);
  const DirectionVerdict v = verify_weak_learner_direction(spec, p, d, 0.1, etas, opt, 0.95, 1);
  EXPECT_FALSE(v.passed);
  EXPECT_TRUE(v.inconclusive);
  EXPECT_EQ(v.attempts, 2);
}

TEST(WeakLearnerDirection, AlignsWithPenexGradientForSmallSteps) {
  ModelSpec spec;
  const Dataset d = gen_blobs(60, 2, 2, 0.6, 2);
  const Parameters p = init_model(spec, 1);
  const std::vector<double> etas{1e-1, 1e-3};
  DirectionSearchOptions opt;
  opt.random_directions = 20000;
  const DirectionCheck c = check_weak_learner_direction(spec, p, d, 0.1, etas, opt);
  ASSERT_FALSE(c.points.back().inconclusive);
  EXPECT_GE(c.points.back().cosine, 0.95);
  EXPECT_GT(c.points.back().rho_fit, 0.0);
}

TEST(Suite, AllChecksPass) {
  int seen = 0;
  SuiteOptions opt;
  opt.on_check = [&](const CheckOutcome&) { ++seen; };
  const auto outcomes = run_verification_suite(opt);
  EXPECT_EQ(seen, static_cast<int>(outcomes.size()));
  for (const auto& o : outcomes) EXPECT_TRUE(o.passed || !o.hard) << o.name << ": " << o.detail;
}

}  // namespace
}  // namespace penex
