#pragma once

#include <cstdint>

namespace penex {

/// Fixed controller constants; they are not tuning parameters.
struct PenaltyParams {
  double beta = 0.1;
  double rho_min = 1e-6;
  double rho_max = 100.0;
  double eps_guard = 1e-12;

  void validate() const;
};

/// Batch estimate of the margin-bound-optimal penalty:
/// alpha * ex_batch_mean / (se_batch_mean + eps_guard).
double estimate_rho_batch(double ex_batch_mean, double se_batch_mean, double alpha,
                          double eps_guard);

/// Running penalty of the adaptive PENEX loop: EMA over per-batch estimates,
/// clipped to [rho_min, rho_max] after every update.
class PenaltyState {
 public:
  explicit PenaltyState(PenaltyParams params = {});

  /// Folds in one batch estimate. On the first call the previous value is
  /// seeded with the estimate itself, so rho_1 = clip(rho_prime).
  double update(double rho_prime);

  /// estimate_rho_batch followed by update().
  double observe(double ex_batch_mean, double se_batch_mean, double alpha);

  bool initialized() const { return initialized_; }
  /// Current smoothed penalty; throws ContractError before the first update.
  double rho() const;
  std::int64_t step() const { return step_; }
  const PenaltyParams& params() const { return params_; }

 private:
  PenaltyParams params_;
  double rho_ = 0.0;
  bool initialized_ = false;
  std::int64_t step_ = 0;
};

}  // namespace penex
