#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "penex/kernels.hpp"

namespace penex::kernels {
namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Independent triple loop: c[i][j] = sum_p a[i][p] b[p][j].
std::vector<double> naive_nn(const std::vector<double>& a, const std::vector<double>& b,
                             std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<double>(s);
    }
  return c;
}

std::vector<double> transpose(const std::vector<double>& a, std::size_t r, std::size_t c) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
  return t;
}

TEST(Kernels, SerialGemmMatchesNaiveProduct) {
  const std::size_t m = 7, k = 5, n = 3;
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  const auto expect = naive_nn(a, b, m, k, n);

  std::vector<double> c(m * n);
  serial::gemm_nn(a, b, c, m, k, n, false);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], expect[i], 1e-12);

  serial::gemm_nt(a, transpose(b, k, n), c, m, k, n, false);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], expect[i], 1e-12);

  serial::gemm_tn(transpose(a, m, k), b, c, m, k, n, false);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], expect[i], 1e-12);
}

TEST(Kernels, AccumulateAddsIntoOutput) {
  const std::vector<double> a{1, 2}, b{3, 4};
  std::vector<double> c{10.0};
  serial::gemm_nn(a, b, c, 1, 2, 1, true);
  EXPECT_EQ(c[0], 21.0);
}

TEST(Kernels, ParallelGemmIsBitIdenticalToSerial) {
  const std::size_t m = 97, k = 61, n = 43;
  const auto a = random_values(m * k, 3), b = random_values(k * n, 4);
  const auto bt = transpose(b, k, n), at = transpose(a, m, k);
  std::vector<double> s(m * n), p(m * n);

  serial::gemm_nn(a, b, s, m, k, n, false);
  parallel::gemm_nn(a, b, p, m, k, n, false);
  EXPECT_EQ(s, p);

  serial::gemm_nt(a, bt, s, m, k, n, false);
  parallel::gemm_nt(a, bt, p, m, k, n, false);
  EXPECT_EQ(s, p);

  serial::gemm_tn(at, b, s, m, k, n, false);
  parallel::gemm_tn(at, b, p, m, k, n, false);
  EXPECT_EQ(s, p);

  gemm_nn(a, b, p, m, k, n);
  serial::gemm_nn(a, b, s, m, k, n, false);
  EXPECT_EQ(s, p);
}

TEST(Kernels, RowwiseKernelsParallelMatchSerial) {
  const std::size_t rows = 513, cols = 9;
  const auto x = random_values(rows * cols, 5);
  std::vector<double> ls(rows), lp(rows), ss(rows * cols), sp(rows * cols);
  serial::row_logsumexp(x, ls, rows, cols);
  parallel::row_logsumexp(x, lp, rows, cols);
  EXPECT_EQ(ls, lp);
  serial::row_softmax(x, ss, rows, cols);
  parallel::row_softmax(x, sp, rows, cols);
  EXPECT_EQ(ss, sp);
}

TEST(Kernels, LogSumExpIsShiftStable) {
  const std::vector<double> x{1000.0, 1000.0, -1000.0, 0.0};
  std::vector<double> out(2);
  serial::row_logsumexp(x, out, 2, 2);
  EXPECT_NEAR(out[0], 1000.0 + std::log(2.0), 1e-12);
  EXPECT_NEAR(out[1], std::log1p(std::exp(-1000.0)), 1e-300);
}

TEST(Kernels, SoftmaxRowsSumToOne) {
  const std::size_t rows = 50, cols = 6;
  const auto x = random_values(rows * cols, 6);
  std::vector<double> p(rows * cols);
  row_softmax(x, p, rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < cols; ++j) s += p[i * cols + j];
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
}

TEST(Kernels, ThreadCountIsPositive) { EXPECT_GE(max_threads(), 1); }

}  // namespace
}  // namespace penex::kernels
