#pragma once

// Dense row-major kernels used by the tensor engine.
//
// Every kernel exists twice: a plain serial loop nest kept as the reference
// and an OpenMP version that splits work over output rows. Each output
// element is accumulated in the same order in both, so results are
// bit-identical and the serial path stays usable as a test oracle.

#include <cstddef>
#include <span>

namespace penex::kernels {

/// Below this many multiply-adds the dispatching entry points stay serial.
inline constexpr std::size_t kParallelMinWork = std::size_t{1} << 15;

namespace serial {

// c[m x n] (+)= a[m x k] * b[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// c[m x n] (+)= a[m x k] * b[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// c[m x n] (+)= a[k x m]^T * b[k x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

void row_logsumexp(std::span<const double> in, std::span<double> out, std::size_t rows,
                   std::size_t cols);
void row_softmax(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols);

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

void row_logsumexp(std::span<const double> in, std::span<double> out, std::size_t rows,
                   std::size_t cols);
void row_softmax(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols);

}  // namespace parallel

// Dispatch on problem size.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void row_logsumexp(std::span<const double> in, std::span<double> out, std::size_t rows,
                   std::size_t cols);
void row_softmax(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols);

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace penex::kernels
