#include "penex/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "penex/errors.hpp"

namespace penex {

void PenaltyParams::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) throw ParameterError("EMA factor beta must lie in (0, 1]");
  if (!(rho_min > 0.0 && rho_min < rho_max))
    throw ParameterError("clip bounds must satisfy 0 < rho_min < rho_max");
  if (!(eps_guard >= 0.0)) throw ParameterError("eps_guard must be nonnegative");
}

double estimate_rho_batch(double ex_batch_mean, double se_batch_mean, double alpha,
                          double eps_guard) {
  if (!(ex_batch_mean >= 0.0) || !(se_batch_mean >= 0.0))
    throw ContractError("estimate_rho_batch: batch means must be nonnegative");
  if (!(alpha > 0.0)) throw ContractError("estimate_rho_batch: alpha must be positive");
  return alpha * ex_batch_mean / (se_batch_mean + eps_guard);
}

PenaltyState::PenaltyState(PenaltyParams params) : params_(params) { params_.validate(); }

double PenaltyState::update(double rho_prime) {
  if (!(rho_prime >= 0.0)) throw ContractError("penalty update: estimate must be nonnegative");
  const double previous = initialized_ ? rho_ : rho_prime;
  const double smoothed = (1.0 - params_.beta) * previous + params_.beta * rho_prime;
  rho_ = std::clamp(smoothed, params_.rho_min, params_.rho_max);
  initialized_ = true;
  ++step_;
  return rho_;
}

double PenaltyState::observe(double ex_batch_mean, double se_batch_mean, double alpha) {
  return update(estimate_rho_batch(ex_batch_mean, se_batch_mean, alpha, params_.eps_guard));
}

double PenaltyState::rho() const {
  if (!initialized_) throw ContractError("penalty state has not been updated yet");
  return rho_;
}

}  // namespace penex
