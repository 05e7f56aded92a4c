#include "penex/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "penex/errors.hpp"
#include "penex/kernels.hpp"

namespace penex {
namespace {

constexpr std::array<std::pair<LossKind, std::string_view>, 9> kNames{{
    {LossKind::kEx, "ex"},
    {LossKind::kPenex, "penex"},
    {LossKind::kCrossEntropy, "ce"},
    {LossKind::kLabelSmoothing, "label_smoothing"},
    {LossKind::kConfidencePenalty, "confidence_penalty"},
    {LossKind::kFocal, "focal"},
    {LossKind::kConexSqPenalty, "conex_sq_penalty"},
    {LossKind::kConexAugLagrangian, "conex_aug_lagrangian"},
    {LossKind::kConexHard, "conex_hard"},
}};

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw ParameterError(std::string(what) + " must be positive, got " + std::to_string(v));
}

void require_nonnegative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v))
    throw ParameterError(std::string(what) + " must be nonnegative, got " + std::to_string(v));
}

}  // namespace

std::string_view to_string(LossKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

LossKind loss_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  if (name == "cross_entropy") return LossKind::kCrossEntropy;
  throw ParameterError("unknown loss kind '" + std::string(name) + "'");
}

void LossSpec::validate() const {
  switch (kind) {
    case LossKind::kEx:
    case LossKind::kConexHard:
      require_positive(alpha, "alpha");
      break;
    case LossKind::kPenex:
      require_positive(alpha, "alpha");
      if (rho) require_positive(*rho, "rho");
      break;
    case LossKind::kCrossEntropy:
      break;
    case LossKind::kLabelSmoothing:
      if (!(smooth_eps >= 0.0 && smooth_eps <= 1.0))
        throw ParameterError("label smoothing eps must lie in [0, 1]");
      break;
    case LossKind::kConfidencePenalty:
      require_nonnegative(conf_lambda, "confidence penalty lambda");
      break;
    case LossKind::kFocal:
      require_nonnegative(focal_gamma, "focal gamma");
      break;
    case LossKind::kConexAugLagrangian:
      require_positive(nu, "nu");
      [[fallthrough]];
    case LossKind::kConexSqPenalty:
      require_positive(alpha, "alpha");
      require_positive(conex_rho, "conex rho");
      break;
  }
}

Tensor ex_loss(const Tensor& logits, std::span<const int> labels, double alpha) {
  require_positive(alpha, "alpha");
  return mean(exp(scale(gather_labels(logits, labels), -alpha)));
}

Tensor sum_exp_mean(const Tensor& logits) { return mean(exp(log_sum_exp(logits))); }

PenexTerms penex_terms(const Tensor& logits, std::span<const int> labels, double alpha) {
  return {ex_loss(logits, labels, alpha), sum_exp_mean(logits)};
}

Tensor penex_loss(const Tensor& logits, std::span<const int> labels, double alpha, double rho) {
  require_positive(rho, "rho");
  auto [ex, se] = penex_terms(logits, labels, alpha);
  return add(ex, scale(se, rho));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return mean(sub(log_sum_exp(logits), gather_labels(logits, labels)));
}

Tensor label_smoothing_loss(const Tensor& logits, std::span<const int> labels, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0))
    throw ParameterError("label smoothing eps must lie in [0, 1], got " + std::to_string(eps));
  const double k = static_cast<double>(logits.cols());
  // -sum_j t_j log p_j = lse - (1 - eps) f_y - (eps / K) sum_j f_j
  Tensor target_logit =
      add(scale(gather_labels(logits, labels), 1.0 - eps), scale(row_sum(logits), eps / k));
  return mean(sub(log_sum_exp(logits), target_logit));
}

Tensor confidence_penalty_loss(const Tensor& logits, std::span<const int> labels,
                               double lambda) {
  require_nonnegative(lambda, "confidence penalty lambda");
  Tensor lse = log_sum_exp(logits);
  Tensor ce = mean(sub(lse, gather_labels(logits, labels)));
  if (lambda == 0.0) return ce;
  // H(softmax(f)) = lse - sum_j p_j f_j
  Tensor entropy = sub(lse, row_sum(mul(softmax(logits), logits)));
  return sub(ce, scale(mean(entropy), lambda));
}

Tensor focal_loss(const Tensor& logits, std::span<const int> labels, double gamma) {
  require_nonnegative(gamma, "focal gamma");
  Tensor log_p = sub(gather_labels(logits, labels), log_sum_exp(logits));
  Tensor weight = pow_scalar(add_scalar(scale(exp(log_p), -1.0), 1.0), gamma);
  return mean(mul(weight, scale(log_p, -1.0)));
}

Tensor mean_constraint_sq(const Tensor& logits) {
  Tensor h = row_sum(logits);
  return mean(mul(h, h));
}

namespace {
Tensor conex_penalty(const Tensor& mean_h_sq, double rho, bool verbatim) {
  return scale(verbatim ? mul(mean_h_sq, mean_h_sq) : mean_h_sq, rho / 2.0);
}
}  // namespace

Tensor conex_sq_penalty_loss(const Tensor& logits, std::span<const int> labels, double rho,
                             double alpha, bool verbatim) {
  require_positive(rho, "rho");
  return add(ex_loss(logits, labels, alpha),
             conex_penalty(mean_constraint_sq(logits), rho, verbatim));
}

Tensor conex_aug_lagrangian_loss(const Tensor& logits, std::span<const int> labels, double rho,
                                 double alpha, double lambda, bool verbatim) {
  require_positive(rho, "rho");
  Tensor m = mean_constraint_sq(logits);
  return add(add(ex_loss(logits, labels, alpha), conex_penalty(m, rho, verbatim)),
             scale(m, lambda));
}

double al_dual_update(double lambda_prev, double rho, double nu, double mean_h_sq) {
  require_positive(rho, "rho");
  require_positive(nu, "nu");
  require_nonnegative(mean_h_sq, "mean squared constraint residual");
  return lambda_prev + (rho / nu) * mean_h_sq;
}

std::vector<double> margin(const Tensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows(), k = logits.cols();
  if (k < 2) throw ContractError("margin is undefined for a single class");
  if (labels.size() != n) throw DimensionError("margin: label count does not match rows");
  const auto d = logits.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw IndexError("margin: label " + std::to_string(y) + " out of range");
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j)
      if (j != static_cast<std::size_t>(y)) best_other = std::max(best_other, d[i * k + j]);
    out[i] = d[i * k + static_cast<std::size_t>(y)] - best_other;
  }
  return out;
}

Tensor penex_inference_probs(const Tensor& logits, double alpha) {
  require_positive(alpha, "alpha");
  return softmax(scale(logits, 1.0 + alpha));
}

bool sum_exp_overflows(const Tensor& logits) {
  std::vector<double> lse(logits.rows());
  kernels::row_logsumexp(logits.data(), lse, logits.rows(), logits.cols());
  return std::any_of(lse.begin(), lse.end(),
                     [](double v) { return !(v <= kMaxLogSumExp); });
}

LossEval evaluate_loss(const LossSpec& spec, const Tensor& logits, std::span<const int> labels,
                       double rho, double lambda) {
  LossEval out;
  bool uses_sum_exp = false;
  switch (spec.kind) {
    case LossKind::kEx:
    case LossKind::kConexHard:
      out.value = ex_loss(logits, labels, spec.alpha);
      break;
    case LossKind::kPenex: {
      auto terms = penex_terms(logits, labels, spec.alpha);
      out.ex_mean = terms.ex.item();
      out.sum_exp_mean = terms.sum_exp.item();
      const double r = spec.rho.value_or(rho);
      require_positive(r, "rho");
      out.value = add(terms.ex, scale(terms.sum_exp, r));
      uses_sum_exp = true;
      break;
    }
    case LossKind::kCrossEntropy:
      out.value = cross_entropy(logits, labels);
      break;
    case LossKind::kLabelSmoothing:
      out.value = label_smoothing_loss(logits, labels, spec.smooth_eps);
      break;
    case LossKind::kConfidencePenalty:
      out.value = confidence_penalty_loss(logits, labels, spec.conf_lambda);
      break;
    case LossKind::kFocal:
      out.value = focal_loss(logits, labels, spec.focal_gamma);
      break;
    case LossKind::kConexSqPenalty:
      out.value = conex_sq_penalty_loss(logits, labels, spec.conex_rho, spec.alpha,
                                        spec.squared_penalty_verbatim);
      break;
    case LossKind::kConexAugLagrangian:
      out.value = conex_aug_lagrangian_loss(logits, labels, spec.conex_rho, spec.alpha, lambda,
                                            spec.squared_penalty_verbatim);
      break;
  }
  out.diverged = !std::isfinite(out.value.item()) || (uses_sum_exp && sum_exp_overflows(logits));
  return out;
}

}  // namespace penex
