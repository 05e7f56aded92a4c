#include "penex/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace penex::kernels {
namespace {

// Per-row bodies shared by both variants so the arithmetic cannot drift.

inline void gemm_nn_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t k, std::size_t n, bool accumulate) {
  double* ci = c + i * n;
  if (!accumulate) std::fill(ci, ci + n, 0.0);
  const double* ai = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = ai[p];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
  }
}

inline void gemm_nt_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t k, std::size_t n, bool accumulate) {
  const double* ai = a + i * k;
  double* ci = c + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const double* bj = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
    ci[j] = accumulate ? ci[j] + s : s;
  }
}

inline void gemm_tn_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  double* ci = c + i * n;
  if (!accumulate) std::fill(ci, ci + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double api = a[p * m + i];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
  }
}

inline double lse_row(const double* x, std::size_t cols) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - mx);
  return mx + std::log(s);
}

inline void softmax_row(const double* x, double* y, std::size_t cols) {
  const double lse = lse_row(x, cols);
  for (std::size_t j = 0; j < cols; ++j) y[j] = std::exp(x[j] - lse);
}

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_nn_row(a.data(), b.data(), c.data(), i, k, n, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a.data(), b.data(), c.data(), i, k, n, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    gemm_tn_row(a.data(), b.data(), c.data(), i, m, k, n, accumulate);
}

void row_logsumexp(std::span<const double> in, std::span<double> out, std::size_t rows,
                   std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) out[i] = lse_row(in.data() + i * cols, cols);
}

void row_softmax(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    softmax_row(in.data() + i * cols, out.data() + i * cols, cols);
}

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_nn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_nt_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_tn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), m, k, n, accumulate);
}

void row_logsumexp(std::span<const double> in, std::span<double> out, std::size_t rows,
                   std::size_t cols) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < r; ++i)
    out[static_cast<std::size_t>(i)] = lse_row(in.data() + static_cast<std::size_t>(i) * cols, cols);
}

void row_softmax(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < r; ++i) {
    const auto off = static_cast<std::size_t>(i) * cols;
    softmax_row(in.data() + off, out.data() + off, cols);
  }
}

}  // namespace parallel

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (m * k * n >= kParallelMinWork)
    parallel::gemm_nn(a, b, c, m, k, n, accumulate);
  else
    serial::gemm_nn(a, b, c, m, k, n, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (m * k * n >= kParallelMinWork)
    parallel::gemm_nt(a, b, c, m, k, n, accumulate);
  else
    serial::gemm_nt(a, b, c, m, k, n, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (m * k * n >= kParallelMinWork)
    parallel::gemm_tn(a, b, c, m, k, n, accumulate);
  else
    serial::gemm_tn(a, b, c, m, k, n, accumulate);
}

void row_logsumexp(std::span<const double> in, std::span<double> out, std::size_t rows,
                   std::size_t cols) {
  if (rows * cols >= kParallelMinWork)
    parallel::row_logsumexp(in, out, rows, cols);
  else
    serial::row_logsumexp(in, out, rows, cols);
}

void row_softmax(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols) {
  if (rows * cols >= kParallelMinWork)
    parallel::row_softmax(in, out, rows, cols);
  else
    serial::row_softmax(in, out, rows, cols);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace penex::kernels
