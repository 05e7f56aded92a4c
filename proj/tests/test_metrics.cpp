#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "penex/errors.hpp"
#include "penex/metrics.hpp"

namespace penex {
namespace {

// Naive loop oracles written without any shared helpers.
struct Case {
  std::size_t n, k;
  std::vector<double> p;
  std::vector<int> y;
  Tensor probs() const { return Tensor::matrix(n, k, p); }
};

Case random_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> nd(1, 40), kd(2, 6);
  Case c{nd(rng), kd(rng), {}, {}};
  std::exponential_distribution<double> e(1.0);
  for (std::size_t i = 0; i < c.n; ++i) {
    double s = 0;
    std::vector<double> row(c.k);
    for (double& v : row) s += (v = e(rng));
    for (double v : row) c.p.push_back(v / s);
    c.y.push_back(std::uniform_int_distribution<int>(0, static_cast<int>(c.k) - 1)(rng));
  }
  return c;
}

int naive_argmax(const Case& c, std::size_t i) {
  int best = 0;
  for (std::size_t j = 1; j < c.k; ++j)
    if (c.p[i * c.k + j] > c.p[i * c.k + best]) best = static_cast<int>(j);
  return best;
}

double naive_acc(const Case& c) {
  double hits = 0;
  for (std::size_t i = 0; i < c.n; ++i) hits += naive_argmax(c, i) == c.y[i];
  return hits / c.n;
}

double naive_ece(const Case& c, int bins) {
  double total = 0;
  for (int m = 1; m <= bins; ++m) {
    const double lo = static_cast<double>(m - 1) / bins, hi = static_cast<double>(m) / bins;
    double count = 0, correct = 0, conf = 0;
    for (std::size_t i = 0; i < c.n; ++i) {
      const double q = c.p[i * c.k + naive_argmax(c, i)];
      const bool in = (q > lo && q <= hi) || (m == 1 && q == 0.0);
      if (!in) continue;
      count += 1;
      conf += q;
      correct += naive_argmax(c, i) == c.y[i];
    }
    if (count > 0) total += count / c.n * std::abs(correct / count - conf / count);
  }
  return total;
}

double naive_brier(const Case& c) {
  double s = 0;
  for (std::size_t i = 0; i < c.n; ++i)
    for (std::size_t j = 0; j < c.k; ++j) {
      const double t = static_cast<int>(j) == c.y[i] ? 1.0 : 0.0;
      s += (c.p[i * c.k + j] - t) * (c.p[i * c.k + j] - t);
    }
  return s / c.n;
}

double naive_ce(const Case& c) {
  double s = 0;
  for (std::size_t i = 0; i < c.n; ++i) s -= std::log(c.p[i * c.k + c.y[i]]);
  return s / c.n;
}

TEST(Accuracy, Examples) {
  EXPECT_EQ(accuracy(Tensor::matrix({{1, 0}, {0, 1}}), Labels{0, 1}), 1.0);
  EXPECT_EQ(accuracy(Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}}), Labels{0, 0}), 1.0);
  EXPECT_EQ(accuracy(Tensor::matrix({{0.6, 0.4}, {0.3, 0.7}}), Labels{1, 1}), 0.5);
}

TEST(Ece, Examples) {
  EXPECT_EQ(ece(Tensor::matrix({{1, 0}, {0, 1}}), Labels{0, 1}), 0.0);
  EXPECT_NEAR(ece(Tensor::matrix({{0.9, 0.1}, {0.9, 0.1}}), Labels{0, 1}), 0.4, 1e-15);
}

TEST(Ece, RejectsRowsOffTheSimplex) {
  EXPECT_THROW(ece(Tensor::matrix({{0.0, 0.0}}), Labels{0}), ContractError);
}

TEST(Brier, Examples) {
  EXPECT_EQ(brier(Tensor::matrix({{1, 0}}), Labels{0}), 0.0);
  EXPECT_NEAR(brier(Tensor::matrix({{0.8, 0.2}}), Labels{0}), 0.08, 1e-15);
  EXPECT_EQ(brier(Tensor::matrix({{0.5, 0.5}}), Labels{0}), 0.5);
  EXPECT_EQ(brier(Tensor::matrix({{0.5, 0.5}}), Labels{1}), 0.5);
}

TEST(Brier, MaximumTwoOnlyForConfidentMistakes) {
  EXPECT_EQ(brier(Tensor::matrix({{0, 1, 0}}), Labels{0}), 2.0);
  EXPECT_LT(brier(Tensor::matrix({{0, 0.999, 0.001}}), Labels{0}), 2.0);
}

TEST(EvalCe, Examples) {
  EXPECT_EQ(eval_ce(Tensor::matrix({{1, 0}}), Labels{0}), 0.0);
  const double inv_e = std::exp(-1.0);
  EXPECT_NEAR(eval_ce(Tensor::matrix({{inv_e, 1 - inv_e}}), Labels{0}), 1.0, 1e-15);
  EXPECT_NEAR(eval_ce(Tensor::matrix({{0.5, 0.5}}), Labels{0}), std::log(2.0), 1e-15);
}

TEST(EvalCe, ZeroProbabilityIsClampedAndFlagged) {
  bool saturated = false;
  const double v = eval_ce(Tensor::matrix({{0, 1}}), Labels{0}, &saturated);
  EXPECT_TRUE(saturated);
  EXPECT_NEAR(v, -std::log(kProbFloor), 1e-12);
  eval_ce(Tensor::matrix({{0.5, 0.5}}), Labels{0}, &saturated);
  EXPECT_FALSE(saturated);
}

TEST(MetricsOracle, ThousandRandomCases) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 1000; ++t) {
    const Case c = random_case(rng);
    const Tensor p = c.probs();
    ASSERT_NEAR(accuracy(p, c.y), naive_acc(c), 1e-12);
    ASSERT_NEAR(ece(p, c.y), naive_ece(c, 15), 1e-12);
    ASSERT_NEAR(brier(p, c.y), naive_brier(c), 1e-12);
    ASSERT_NEAR(eval_ce(p, c.y), naive_ce(c), 1e-12);
  }
}

TEST(MetricsProperty, RangesAndSingleBinEce) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 300; ++t) {
    const Case c = random_case(rng);
    const Tensor p = c.probs();
    const double acc = accuracy(p, c.y), e = ece(p, c.y), b = brier(p, c.y);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 2.0);
    double mean_conf = 0;
    for (std::size_t i = 0; i < c.n; ++i) mean_conf += c.p[i * c.k + naive_argmax(c, i)] / c.n;
    EXPECT_NEAR(ece(p, c.y, 1), std::abs(acc - mean_conf), 1e-12);
  }
}

TEST(ArgmaxRows, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax_rows(Tensor::matrix({{1, 3, 3}, {2, 2, 2}, {0, -1, 5}})),
            (std::vector<int>{1, 0, 2}));
}

TEST(MarginQuantiles, LinearInterpolation) {
  std::vector<double> m;
  for (int i = 100; i >= 0; --i) m.push_back(i);
  const MarginQuantiles q = margin_quantiles(m);
  EXPECT_DOUBLE_EQ(q.p05, 5.0);
  EXPECT_DOUBLE_EQ(q.p25, 25.0);
  EXPECT_DOUBLE_EQ(q.p50, 50.0);
  EXPECT_DOUBLE_EQ(q.p95, 95.0);
}

TEST(Histogram, CountsEverySample) {
  const std::vector<double> v{0, 0.5, 1, 1, 2};
  const Histogram h = histogram(v, 4);
  EXPECT_EQ(h.lo, 0.0);
  EXPECT_EQ(h.hi, 2.0);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 1, 2, 1}));
}

TEST(Bootstrap, IntervalCoversMeanAndIsDeterministic) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(1.0, 1.0);
  std::vector<double> v(500);
  for (double& x : v) x = g(rng);
  const auto a = bootstrap_mean_ci(v, 1000, 0.95, 11);
  const auto b = bootstrap_mean_ci(v, 1000, 0.95, 11);
  EXPECT_EQ(a, b);
  double mean = 0;
  for (double x : v) mean += x / v.size();
  EXPECT_LT(a.first, mean);
  EXPECT_GT(a.second, mean);
}

}  // namespace
}  // namespace penex
