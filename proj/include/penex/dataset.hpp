#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "penex/tensor.hpp"

namespace penex {

enum class Provenance { kBlobs, kRings, kCategoricalSingleX, kCsv };

std::string_view to_string(Provenance p);

/// Labeled feature matrix. Features are row-major n x d.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> features;
  Labels labels;
  int num_classes = 0;
  Provenance provenance = Provenance::kBlobs;
  std::uint64_t seed = 0;

  /// Throws on out-of-range labels or inconsistent sizes.
  void validate() const;
  std::span<const double> row(std::size_t i) const { return {features.data() + i * d, d}; }
  Tensor feature_tensor() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

/// Per-class spread giving a ~5% Bayes error for two unit-radius blobs:
/// 1 / Phi^{-1}(0.95).
inline constexpr double kBlobsFivePercentSpread = 0.6079568319117692;

/// K isotropic Gaussian clusters centred on the unit circle at angles 2*pi*k/K
/// (remaining coordinates zero). Labels cycle 0..K-1, so counts are balanced.
Dataset gen_blobs(std::size_t n, int num_classes, std::size_t d, double spread,
                  std::uint64_t seed);

/// Concentric rings, class k at radius k + 1 with Gaussian radial noise.
Dataset gen_rings(std::size_t n, int num_classes, double noise, std::uint64_t seed);

/// Constant feature vector (all ones, dimension d), labels drawn i.i.d. from probs.
Dataset gen_categorical_single_x(std::span<const double> probs, std::size_t n,
                                 std::uint64_t seed, std::size_t d = 1);

/// Resamples floor(fraction * n) distinct labels uniformly from the other K-1 classes.
Dataset flip_labels(const Dataset& data, double fraction, std::uint64_t seed);

/// Seeded permutation, then the first ceil(train_ratio * n) rows form the train part.
std::pair<Dataset, Dataset> split(const Dataset& data, double train_ratio, std::uint64_t seed);

/// Reads `f0,...,f{d-1},label`. A gap in the label set keeps K = max + 1 and
/// appends a warning.
Dataset load_csv(const std::filesystem::path& path, bool standardize = false,
                 std::vector<std::string>* warnings = nullptr);
void save_csv(const Dataset& data, const std::filesystem::path& path);

/// In-place z-scoring of every feature column (constant columns left centred).
void standardize_columns(Dataset& data);

}  // namespace penex
