#include "penex/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "penex/errors.hpp"

namespace penex {

void TrainConfig::validate() const {
  loss.validate();
  model.validate();
  optim.validate();
  penalty.validate();
  if (epochs < 0) throw ParameterError("epochs must be nonnegative");
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
  if (loss.kind == LossKind::kConexHard && model.num_classes < 2)
    throw ParameterError("conex_hard needs at least two classes");
}

ModelSpec TrainConfig::effective_model() const {
  ModelSpec m = model;
  if (loss.kind == LossKind::kConexHard) m.conex_hard = true;
  return m;
}

TrainState::TrainState(const TrainConfig& config, Parameters initial)
    : params(std::move(initial)),
      optim(config.optim, params),
      dropout_rng(derive_seed(config.seed, 2)) {
  if (config.loss.adaptive_rho()) penalty.emplace(config.penalty);
}

StepLog train_step(const TrainConfig& config, TrainState& state, const Tensor& x,
                   std::span<const int> labels) {
  if (labels.empty()) throw ContractError("train_step: empty batch");
  StepLog log;
  log.step = state.step + 1;

  auto tensors = state.params.all();
  for (auto& t : tensors) t.zero_grad();

  Graph graph;
  const ModelSpec model = config.effective_model();
  Tensor logits = forward(model, state.params, x, &state.dropout_rng);

  Tensor loss;
  bool diverged = false;
  const LossSpec& spec = config.loss;
  if (spec.kind == LossKind::kPenex) {
    auto [ex, se] = penex_terms(logits, labels, spec.alpha);
    const double ex_v = ex.item(), se_v = se.item();
    diverged = !std::isfinite(ex_v) || !std::isfinite(se_v) || sum_exp_overflows(logits);
    if (!diverged) {
      // The estimate is a detached statistic: only its value enters the loss.
      const double rho = spec.rho ? *spec.rho : state.penalty->observe(ex_v, se_v, spec.alpha);
      log.rho = rho;
      loss = add(ex, scale(se, rho));
    }
  } else {
    LossEval eval = evaluate_loss(spec, logits, labels, 0.0, state.al_lambda);
    diverged = eval.diverged;
    loss = eval.value;
  }

  if (diverged || !std::isfinite(loss.item())) {
    log.diverged = true;
    log.loss = std::numeric_limits<double>::infinity();
    if (state.penalty && state.penalty->initialized()) log.rho = state.penalty->rho();
    return log;
  }
  log.loss = loss.item();

  graph.backward(loss);
  Gradients grads;
  grads.reserve(tensors.size());
  for (const auto& t : tensors) {
    if (t.has_grad())
      grads.emplace_back(t.grad().begin(), t.grad().end());
    else
      grads.emplace_back(t.numel(), 0.0);
  }
  log.grad_norm = global_norm(grads);
  if (config.optim.grad_clip_value)
    clip_gradients(grads, *config.optim.grad_clip_value, config.optim.clip_mode);
  state.optim.step(state.params, grads);

  if (spec.kind == LossKind::kConexAugLagrangian) {
    // Dual ascent on the residual measured before the primal step.
    NoGrad no_grad;
    const double mean_h_sq = mean_constraint_sq(logits.detach()).item();
    state.al_lambda = al_dual_update(state.al_lambda, spec.conex_rho, spec.nu, mean_h_sq);
    log.al_lambda = state.al_lambda;
  }
  ++state.step;
  return log;
}

Tensor predict_probs(const LossSpec& loss, const Tensor& logits) {
  if (loss.kind == LossKind::kPenex) return penex_inference_probs(logits, loss.alpha);
  return softmax(logits);
}

namespace {

struct Evaluation {
  MetricsReport metrics;
  std::vector<double> margins;
  double mean_abs_logit = 0.0;
  double max_abs_row_sum = 0.0;
};

Evaluation evaluate_full(const TrainConfig& config, const Parameters& params,
                         const Dataset& data) {
  NoGrad no_grad;
  Evaluation out;
  if (data.n == 0) return out;
  Tensor logits = forward(config.effective_model(), params, data.feature_tensor());
  const auto l = logits.data();
  const std::size_t k = logits.cols();
  bool finite = true;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = l[i * k + j];
      finite = finite && std::isfinite(v);
      abs_sum += std::abs(v);
      row += v;
    }
    out.max_abs_row_sum = std::max(out.max_abs_row_sum, std::abs(row));
  }
  out.mean_abs_logit = abs_sum / static_cast<double>(l.size());
  if (!finite) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.metrics = {nan, nan, nan, nan, nan, {nan, nan, nan, nan, nan}, data.n, true};
    return out;
  }
  out.margins = margin(logits, data.labels);
  out.metrics = evaluate_metrics(predict_probs(config.loss, logits), out.margins, data.labels);
  return out;
}

}  // namespace

MetricsReport evaluate(const TrainConfig& config, const Parameters& params, const Dataset& data) {
  return evaluate_full(config, params, data).metrics;
}

RunReport train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                const EpochHook& on_epoch) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  train_set.validate();
  if (train_set.n == 0) throw ContractError("train: empty training set");
  if (config.batch_size > train_set.n)
    throw ParameterError("batch_size exceeds the training-set size");
  const ModelSpec model = config.effective_model();
  if (train_set.d != model.input_dim || train_set.num_classes > model.num_classes)
    throw DimensionError("train: dataset does not match the model dimensions");

  RunReport report;
  report.config = config;
  TrainState state(config, init_model(model, config.seed));

  auto record_epoch = [&](int epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    Evaluation tr = evaluate_full(config, state.params, train_set);
    Evaluation va = evaluate_full(config, state.params, val_set);
    rec.train = tr.metrics;
    rec.val = va.metrics;
    rec.mean_abs_logit = tr.mean_abs_logit;
    rec.max_abs_row_sum = tr.max_abs_row_sum;
    if (config.loss.kind == LossKind::kPenex) {
      if (config.loss.rho) {
        rec.rho = *config.loss.rho;
      } else if (state.penalty->initialized()) {
        rec.rho = state.penalty->rho();
      } else {
        // Before the first step, report the value the controller would be
        // seeded with if the first batch were the whole training set.
        NoGrad no_grad;
        const auto terms = penex_terms(forward(model, state.params, train_set.feature_tensor()),
                                       train_set.labels, config.loss.alpha);
        const double estimate = estimate_rho_batch(terms.ex.item(), terms.sum_exp.item(),
                                                   config.loss.alpha, config.penalty.eps_guard);
        rec.rho = std::clamp(estimate, config.penalty.rho_min, config.penalty.rho_max);
      }
    }
    if (on_epoch) on_epoch(rec, state.params);
    report.epochs.push_back(std::move(rec));
    report.final_val_margins = std::move(va.margins);
  };

  record_epoch(0);
  Rng shuffle_rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(train_set.n);
  const Tensor features = train_set.feature_tensor();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    bool halted = false;
    for (std::size_t start = 0; start < train_set.n; start += config.batch_size) {
      const std::size_t end = std::min(train_set.n, start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Dataset batch = train_set.subset(idx);
      StepLog log = train_step(config, state, batch.feature_tensor(), batch.labels);
      log.epoch = epoch;
      report.steps.push_back(log);
      if (log.diverged) {
        if (!report.diverged) report.divergence_epoch = epoch;
        report.diverged = true;
        if (config.halt_on_divergence) {
          halted = true;
          break;
        }
      }
    }
    record_epoch(epoch);
    if (halted) break;
  }

  report.final_params = state.params.clone();
  report.margin_histogram = histogram(report.final_val_margins, 50);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace penex
