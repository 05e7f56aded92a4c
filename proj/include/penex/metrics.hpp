#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "penex/tensor.hpp"

namespace penex {

struct MarginQuantiles {
  double p05 = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p95 = 0.0;
};

/// Positive-oriented evaluation metrics (smaller is better for ece/ce/brier).
struct MetricsReport {
  double acc = 0.0;
  double ece = 0.0;
  double ce = 0.0;
  double brier = 0.0;
  double mean_margin = 0.0;
  MarginQuantiles margin_quantiles;
  std::size_t n = 0;
  /// Some true-class probability was clamped to kProbFloor inside eval_ce.
  bool ce_saturated = false;
};

inline constexpr int kDefaultEceBins = 15;
inline constexpr double kProbFloor = 1e-12;

/// Index of the largest entry of each row, ties to the lowest index.
std::vector<int> argmax_rows(const Tensor& scores);

double accuracy(const Tensor& probs, std::span<const int> labels);
/// Binned |accuracy - confidence| with bins ((m-1)/M, m/M]; confidence 0 goes to bin 1.
double ece(const Tensor& probs, std::span<const int> labels, int bins = kDefaultEceBins);
double brier(const Tensor& probs, std::span<const int> labels);
/// Mean negative log-likelihood of the true class.
double eval_ce(const Tensor& probs, std::span<const int> labels, bool* saturated = nullptr);

/// Linear-interpolated quantiles of an unsorted sample.
MarginQuantiles margin_quantiles(std::span<const double> margins);

MetricsReport evaluate_metrics(const Tensor& probs, std::span<const double> margins,
                               std::span<const int> labels);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};

/// Uniform bins over [min, max] of the sample; the maximum lands in the last bin.
Histogram histogram(std::span<const double> values, std::size_t bins = 50);

/// Percentile bootstrap interval for the mean of per-sample values.
std::pair<double, double> bootstrap_mean_ci(std::span<const double> values, int resamples,
                                            double level, std::uint64_t seed);

}  // namespace penex
