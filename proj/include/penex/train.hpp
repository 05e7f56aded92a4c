#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "penex/dataset.hpp"
#include "penex/losses.hpp"
#include "penex/metrics.hpp"
#include "penex/model.hpp"
#include "penex/optim.hpp"
#include "penex/penalty.hpp"

namespace penex {

struct TrainConfig {
  LossSpec loss;
  ModelSpec model;
  OptimSpec optim;
  int epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  PenaltyParams penalty;
  /// Stop at the first diverged step (true) or keep going with frozen parameters.
  bool halt_on_divergence = true;

  void validate() const;
  /// The model actually trained: CONEX_HARD forces the zero-sum output head.
  ModelSpec effective_model() const;
};

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> rho;
  double grad_norm = 0.0;
  bool diverged = false;
  /// Augmented-Lagrangian multiplier after the dual update.
  std::optional<double> al_lambda;
};

/// Mutable state of one run.
struct TrainState {
  Parameters params;
  Optimizer optim;
  std::optional<PenaltyState> penalty;
  double al_lambda = 0.0;
  Rng dropout_rng;
  std::int64_t step = 0;

  TrainState(const TrainConfig& config, Parameters initial);
};

/// One optimizer step on a batch. A non-finite loss marks the step diverged
/// and leaves parameters, optimizer and penalty state untouched.
StepLog train_step(const TrainConfig& config, TrainState& state, const Tensor& x,
                   std::span<const int> labels);

struct EpochRecord {
  int epoch = 0;
  MetricsReport train;
  MetricsReport val;
  /// Penalty after the last step of the epoch (adaptive or fixed PENEX only).
  std::optional<double> rho;
  double mean_abs_logit = 0.0;
  /// max_i |sum_j f_j(x_i)| over the training set.
  double max_abs_row_sum = 0.0;
};

struct RunReport {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  std::vector<StepLog> steps;
  bool diverged = false;
  std::optional<int> divergence_epoch;
  Parameters final_params;
  std::vector<double> final_val_margins;
  Histogram margin_histogram;
  double wall_clock_seconds = 0.0;
};

/// Class probabilities used for evaluation: rescaled softmax for PENEX,
/// plain softmax otherwise.
Tensor predict_probs(const LossSpec& loss, const Tensor& logits);

/// Metrics on a dataset without recording a graph.
MetricsReport evaluate(const TrainConfig& config, const Parameters& params, const Dataset& data);

/// Observer invoked after every recorded epoch with the parameters at that point.
using EpochHook = std::function<void(const EpochRecord&, const Parameters&)>;

/// Epoch 0 is the untrained model; each further epoch is one shuffled pass.
RunReport train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                const EpochHook& on_epoch = {});

}  // namespace penex
