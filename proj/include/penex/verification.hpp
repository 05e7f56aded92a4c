#pragma once

// Numerical oracles for the properties PENEX is built on: Fisher consistency
// of the conditional minimiser, the failure of entropy-regularised
// cross-entropy, the margin bound and its optimal penalty, and the
// weak-learner interpretation of small gradient steps.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "penex/dataset.hpp"
#include "penex/model.hpp"
#include "penex/tensor.hpp"

namespace penex {

// ---- gradient checking ------------------------------------------------------

struct GradCheckResult {
  /// max over coordinates of |autodiff - central| / max(|autodiff|, |central|, 1e-8)
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares the tape gradient of a scalar function against central differences.
GradCheckResult gradient_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& at,
                               double h = 1e-6);

struct LossGradientReport {
  std::string loss;
  double max_rel_error = 0.0;
  int points = 0;
};

/// gradient_check for every loss kind at `points` random logit matrices.
std::vector<LossGradientReport> check_loss_gradients(int points, std::uint64_t seed);

// ---- Fisher consistency -----------------------------------------------------

/// Conditional minimiser f*(y) = log(alpha P(y) / rho) / (1 + alpha);
/// zero-probability classes map to -inf.
std::vector<double> fisher_closed_form(std::span<const double> probs, double alpha, double rho);

struct FisherNumeric {
  std::vector<double> logits;
  /// Coordinates driven to -inf by a monotone decrease (zero-probability classes).
  std::vector<bool> diverging;
  int iterations = 0;
  bool converged = false;
};

/// Damped Newton on the conditional population PENEX
/// sum_y P(y) exp(-alpha f_y) + rho sum_j exp(f_j), one coordinate at a time,
/// until |gradient| < tol and |Newton step| < tol. Fails after 1e4 iterations.
FisherNumeric fisher_numeric(std::span<const double> probs, double alpha, double rho, double tol);

/// Minimiser over the simplex of H(P || Q) - lambda * H(Q), found from the
/// stationarity condition P(y)/Q(y) - lambda log Q(y) = c with c fixed by
/// normalisation (nested bisection).
std::vector<double> conf_penalty_minimizer(std::span<const double> probs, double lambda);

// ---- margin bound -----------------------------------------------------------

/// Two-sided 99% normal quantile.
inline constexpr double kZ99 = 2.5758293035489004;

/// e^{gamma a} rho^{-a} penex_value with a = alpha / (alpha + 1).
double margin_bound_rhs(double gamma, double alpha, double rho, double penex_value);

struct BoundCheck {
  std::vector<double> gamma_grid;
  std::vector<double> empirical_freq;
  std::vector<double> bound_rhs;
  std::vector<double> slack;
  std::vector<bool> holds;
  double penex_value = 0.0;
  double alpha = 0.0;
  double rho = 0.0;
  std::size_t n = 0;

  bool all_hold() const;
};

BoundCheck check_margin_bound(const Tensor& logits, std::span<const int> labels, double alpha,
                              double rho, std::span<const double> gamma_grid);
BoundCheck check_margin_bound(const ModelSpec& spec, const Parameters& params, const Dataset& data,
                              double alpha, double rho, std::span<const double> gamma_grid);

// ---- optimal penalty ----------------------------------------------------------

struct RhoOptimality {
  double closed_form = 0.0;
  double grid_argmin = 0.0;
  double refined = 0.0;
  double relative_error = 0.0;
  /// |log closed_form - log grid_argmin| <= one grid cell.
  bool within_grid_cell = false;
};

/// Minimises the margin-bound RHS over rho numerically: a log-spaced grid on
/// [1e-8, 1e8], then golden-section refinement in extended precision.
RhoOptimality check_optimal_rho(double alpha, double ex_mean, double se_mean, double gamma,
                                std::size_t grid_points = 10000);

// ---- weak-learner direction ---------------------------------------------------

struct DirectionSearchOptions {
  std::size_t random_directions = 100000;
  std::uint64_t seed = 0;
  bool parallel = true;
};

struct DirectionPoint {
  double eta = 0.0;
  double cosine = 0.0;
  /// Penalty implied by the non-negative fit of the minimiser onto
  /// {-grad EX, -grad SumExp}.
  double rho_fit = 0.0;
  bool inconclusive = false;
  std::string note;
};

struct DirectionCheck {
  std::vector<DirectionPoint> points;
  std::size_t parameters = 0;
};

/// For each eta, searches unit parameter increments of a linear model for the
/// lowest EX(f + eta J d) subject to mean SumExp(f + eta J d) <= mean SumExp(f)
/// (random directions, then local refinement), and reports the cosine between
/// the minimiser and -grad PENEX at the best-fitting rho >= 0.
DirectionCheck check_weak_learner_direction(const ModelSpec& spec, const Parameters& params,
                                            const Dataset& data, double alpha,
                                            std::span<const double> etas,
                                            const DirectionSearchOptions& options = {});

struct DirectionVerdict {
  bool passed = false;
  bool inconclusive = false;
  int attempts = 0;
  DirectionCheck last;
};

/// Runs the direction check and accepts it when the cosine at the smallest eta
/// is at least `cosine_floor` and the cosines never decrease as eta shrinks
/// (etas must be given in decreasing order). Inconclusive attempts are retried
/// with a fresh search seed, at most `max_reruns` times.
DirectionVerdict verify_weak_learner_direction(const ModelSpec& spec, const Parameters& params,
                                               const Dataset& data, double alpha,
                                               std::span<const double> etas,
                                               DirectionSearchOptions options,
                                               double cosine_floor = 0.95, int max_reruns = 2);

// ---- suite --------------------------------------------------------------------

struct CheckOutcome {
  std::string name;
  bool passed = false;
  /// Hard checks fail the suite; soft ones are informational.
  bool hard = true;
  std::string detail;
  double seconds = 0.0;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  /// Called after each check; may be null.
  std::function<void(const CheckOutcome&)> on_check;
};

std::vector<CheckOutcome> run_verification_suite(const SuiteOptions& options = {});

}  // namespace penex
