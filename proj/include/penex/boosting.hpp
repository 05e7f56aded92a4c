#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "penex/dataset.hpp"

namespace penex {

/// Single-split decision tree.
struct Stump {
  std::size_t feature_index = 0;
  double threshold = 0.0;
  int left_class = 0;
  int right_class = 0;

  int predict(std::span<const double> x) const {
    return x[feature_index] <= threshold ? left_class : right_class;
  }
};

struct StumpFit {
  Stump stump;
  double weighted_error = 0.0;
};

/// Exhaustive search over features x thresholds x class assignments for the
/// minimum weighted 0-1 error. Thresholds are -inf, the midpoints between
/// consecutive sorted unique values, and +inf. Ties resolve to the smallest
/// (feature_index, threshold), then the smallest class indices. Features are
/// searched in parallel unless `parallel` is false.
StumpFit fit_stump(const Dataset& data, std::span<const double> weights, bool parallel = true);

struct Ensemble {
  std::vector<Stump> stumps;
  std::vector<double> etas;
  int num_classes = 0;

  /// Per-class vote sums sum_m eta_m * 1{g_m(x) = k}.
  std::vector<double> votes(std::span<const double> x) const;
  /// Largest vote, ties to the lowest class index.
  int predict(std::span<const double> x) const;
};

inline int ensemble_predict(const Ensemble& e, std::span<const double> x) { return e.predict(x); }

/// log((1 - eps) / eps) + log(K - 1), with eps = 0 capped at eps = 1e-12.
double samme_eta(double epsilon, int num_classes);

struct SammeRound {
  Stump stump;
  double eta = 0.0;
  double epsilon = 0.0;
  std::vector<double> new_weights;
  /// eps >= (K-1)/K: the round is unusable and boosting should stop.
  bool rejected = false;
};

struct SammeOptions {
  /// Update with w * exp(-eta * 1{wrong}) instead of the standard
  /// w * exp(+eta * 1{wrong}); kept for comparison only.
  bool shrink_misclassified = false;
  bool parallel = true;
};

SammeRound samme_round(const Dataset& data, std::span<const double> weights,
                       const SammeOptions& options = {});

struct BoostRoundLog {
  int round = 0;
  double epsilon = 0.0;
  double eta = 0.0;
  double train_acc = 0.0;
  double mean_margin = 0.0;
  /// min_i w(i) and |sum_i w(i) - 1| after the update.
  double min_weight = 0.0;
  double weight_sum_error = 0.0;
};

struct BoostReport {
  Ensemble ensemble;
  std::vector<BoostRoundLog> rounds;
  bool stopped_early = false;
  std::string stop_reason;
};

/// Up to M rounds of SAMME from uniform weights. `seed` is recorded for
/// reproducibility; the search itself is deterministic.
BoostReport samme_train(const Dataset& data, int rounds, std::uint64_t seed,
                        const SammeOptions& options = {});

/// Vote margins normalised by sum_m eta_m:
/// (votes[y] - max_{k != y} votes[k]) / sum_m eta_m, in [-1, 1].
std::vector<double> ensemble_margins(const Ensemble& e, const Dataset& data);
double ensemble_accuracy(const Ensemble& e, const Dataset& data);

}  // namespace penex
