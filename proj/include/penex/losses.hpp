#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "penex/tensor.hpp"

namespace penex {

enum class LossKind {
  kEx,
  kPenex,
  kCrossEntropy,
  kLabelSmoothing,
  kConfidencePenalty,
  kFocal,
  kConexSqPenalty,
  kConexAugLagrangian,
  kConexHard,
};

std::string_view to_string(LossKind kind);
/// Accepts the canonical names ("penex", "ce", "label_smoothing", ...).
LossKind loss_kind_from_string(std::string_view name);

/// Selects a loss and carries its hyperparameters. Only the fields relevant
/// to `kind` are consulted.
struct LossSpec {
  LossKind kind = LossKind::kPenex;
  double alpha = 0.1;
  /// Fixed penalty; nullopt selects the adaptive controller (PENEX only).
  std::optional<double> rho;
  double smooth_eps = 0.1;
  double conf_lambda = 0.1;
  double focal_gamma = 2.0;
  /// Penalty weight of the CONEX squared-penalty / augmented-Lagrangian terms.
  double conex_rho = 1.0;
  /// Inverse scaling of the augmented-Lagrangian dual step.
  double nu = 1.0;
  /// true: (rho/2) * mean(h^2)^2; false: (rho/2) * mean(h^2).
  bool squared_penalty_verbatim = true;

  bool adaptive_rho() const { return kind == LossKind::kPenex && !rho.has_value(); }
  /// Throws ParameterError when a consulted field is out of range.
  void validate() const;
};

// Every loss takes logits [n x K] and labels in [0, K) and returns a scalar
// tensor averaged over the n rows.

/// mean_i exp(-alpha * logits[i, y_i])
Tensor ex_loss(const Tensor& logits, std::span<const int> labels, double alpha);
/// mean_i sum_j exp(logits[i, j]), evaluated as exp(log_sum_exp(row)).
Tensor sum_exp_mean(const Tensor& logits);
/// ex_loss + rho * sum_exp_mean
Tensor penex_loss(const Tensor& logits, std::span<const int> labels, double alpha, double rho);
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Cross-entropy against (1 - eps) * onehot + eps / K.
Tensor label_smoothing_loss(const Tensor& logits, std::span<const int> labels, double eps);
/// Cross-entropy minus lambda times the mean softmax entropy.
Tensor confidence_penalty_loss(const Tensor& logits, std::span<const int> labels, double lambda);
/// mean_i (1 - p_i)^gamma * (-log p_i), p_i the true-class softmax probability.
Tensor focal_loss(const Tensor& logits, std::span<const int> labels, double gamma);

/// mean_i (sum_j logits[i, j])^2, the CONEX constraint residual.
Tensor mean_constraint_sq(const Tensor& logits);
/// ex_loss(alpha) + (rho/2) * mean(h^2)^2  (or (rho/2) * mean(h^2) when not verbatim).
Tensor conex_sq_penalty_loss(const Tensor& logits, std::span<const int> labels, double rho,
                             double alpha, bool verbatim = true);
/// Primal objective of the augmented Lagrangian: squared penalty + lambda * mean(h^2).
Tensor conex_aug_lagrangian_loss(const Tensor& logits, std::span<const int> labels, double rho,
                                 double alpha, double lambda, bool verbatim = true);
/// lambda + (rho / nu) * mean_h_sq
double al_dual_update(double lambda_prev, double rho, double nu, double mean_h_sq);

/// True-class logit minus the largest other logit, per row. Requires K >= 2.
std::vector<double> margin(const Tensor& logits, std::span<const int> labels);
/// softmax((1 + alpha) * logits)
Tensor penex_inference_probs(const Tensor& logits, double alpha);

/// The two PENEX summands kept separate so the adaptive controller can read
/// their batch values before they are combined.
struct PenexTerms {
  Tensor ex;
  Tensor sum_exp;
};
PenexTerms penex_terms(const Tensor& logits, std::span<const int> labels, double alpha);

/// Result of evaluating a LossSpec, with divergence surfaced as a flag.
struct LossEval {
  Tensor value;
  bool diverged = false;
  /// Detached batch means used by the adaptive controller (PENEX kinds).
  double ex_mean = 0.0;
  double sum_exp_mean = 0.0;
};

/// Largest finite log(SumExp) before exp() overflows.
inline constexpr double kMaxLogSumExp = 709.78;

/// True when any row's log-sum-exp exceeds the double range of exp().
bool sum_exp_overflows(const Tensor& logits);

/// Evaluates `spec` on a batch. `rho` is the penalty used when spec.rho is
/// adaptive; `lambda`
/// is the augmented-Lagrangian multiplier. CONEX_HARD expects logits that
/// already satisfy the zero-sum constraint and evaluates EX on them.
LossEval evaluate_loss(const LossSpec& spec, const Tensor& logits, std::span<const int> labels,
                       double rho = 0.0, double lambda = 0.0);

}  // namespace penex
