#include "penex/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "penex/errors.hpp"

namespace penex {
namespace {

constexpr double kTieTolerance = 1e-12;
constexpr double kEpsilonFloor = 1e-12;

struct Candidate {
  StumpFit fit;
  bool valid = false;
};

// Best stump that splits on one feature.
Candidate best_on_feature(const Dataset& data, std::span<const double> weights, std::size_t f) {
  const std::size_t n = data.n;
  const auto k = static_cast<std::size_t>(data.num_classes);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.features[a * data.d + f] < data.features[b * data.d + f];
  });

  std::vector<double> total(k, 0.0), left(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) total[static_cast<std::size_t>(data.labels[i])] += weights[i];

  Candidate best;
  auto consider = [&](double threshold) {
    // Best class per side independently: argmax of the captured weight.
    std::size_t lc = 0, rc = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (left[c] > left[lc]) lc = c;
      if (total[c] - left[c] > total[rc] - left[rc]) rc = c;
    }
    double captured = left[lc] + (total[rc] - left[rc]);
    double all = 0.0;
    for (double t : total) all += t;
    const double err = std::max(0.0, all - captured);
    if (!best.valid || err < best.fit.weighted_error - kTieTolerance) {
      best.valid = true;
      best.fit = {{f, threshold, static_cast<int>(lc), static_cast<int>(rc)}, err};
    }
  };

  consider(-std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  while (i < n) {
    const double v = data.features[order[i] * data.d + f];
    while (i < n && data.features[order[i] * data.d + f] == v) {
      left[static_cast<std::size_t>(data.labels[order[i]])] += weights[order[i]];
      ++i;
    }
    if (i < n) consider(0.5 * (v + data.features[order[i] * data.d + f]));
  }
  consider(std::numeric_limits<double>::infinity());
  return best;
}

}  // namespace

StumpFit fit_stump(const Dataset& data, std::span<const double> weights, bool parallel) {
  if (data.n == 0) throw ContractError("fit_stump: empty dataset");
  if (weights.size() != data.n) throw DimensionError("fit_stump: weight count mismatch");
  if (data.num_classes < 1) throw ContractError("fit_stump: no classes");
  std::vector<Candidate> per_feature(data.d);
  const auto d = static_cast<std::ptrdiff_t>(data.d);
#pragma omp parallel for schedule(dynamic) if (parallel && data.n * data.d > 4096)
  for (std::ptrdiff_t f = 0; f < d; ++f)
    per_feature[static_cast<std::size_t>(f)] =
        best_on_feature(data, weights, static_cast<std::size_t>(f));
  // Serial reduction keeps the (feature, threshold) tie order.
  Candidate best;
  for (const auto& c : per_feature)
    if (c.valid && (!best.valid || c.fit.weighted_error < best.fit.weighted_error - kTieTolerance))
      best = c;
  return best.fit;
}

std::vector<double> Ensemble::votes(std::span<const double> x) const {
  std::vector<double> v(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t m = 0; m < stumps.size(); ++m)
    v[static_cast<std::size_t>(stumps[m].predict(x))] += etas[m];
  return v;
}

int Ensemble::predict(std::span<const double> x) const {
  const auto v = votes(x);
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double samme_eta(double epsilon, int num_classes) {
  const double eps = std::max(epsilon, kEpsilonFloor);
  return std::log((1.0 - eps) / eps) + std::log(static_cast<double>(num_classes - 1));
}

SammeRound samme_round(const Dataset& data, std::span<const double> weights,
                       const SammeOptions& options) {
  for (double w : weights)
    if (!(w >= 0.0)) throw ContractError("samme_round: weights must be nonnegative");
  SammeRound out;
  const StumpFit fit = fit_stump(data, weights, options.parallel);
  out.stump = fit.stump;
  std::vector<bool> wrong(data.n);
  double eps = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    wrong[i] = fit.stump.predict(data.row(i)) != data.labels[i];
    if (wrong[i]) eps += weights[i];
  }
  out.epsilon = eps;
  const int k = data.num_classes;
  if (k < 2 || eps >= static_cast<double>(k - 1) / k) {
    out.rejected = true;
    out.new_weights.assign(weights.begin(), weights.end());
    return out;
  }
  out.eta = samme_eta(eps, k);
  const double sign = options.shrink_misclassified ? -1.0 : 1.0;
  out.new_weights.resize(data.n);
  double z = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    out.new_weights[i] = weights[i] * std::exp(sign * out.eta * (wrong[i] ? 1.0 : 0.0));
    z += out.new_weights[i];
  }
  for (auto& w : out.new_weights) w /= z;
  return out;
}

std::vector<double> ensemble_margins(const Ensemble& e, const Dataset& data) {
  double total_eta = 0.0;
  for (double eta : e.etas) total_eta += eta;
  std::vector<double> out(data.n, 0.0);
  for (std::size_t i = 0; i < data.n; ++i) {
    const auto v = e.votes(data.row(i));
    const auto y = static_cast<std::size_t>(data.labels[i]);
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < v.size(); ++c)
      if (c != y) other = std::max(other, v[c]);
    out[i] = total_eta > 0.0 ? (v[y] - other) / total_eta : 0.0;
  }
  return out;
}

double ensemble_accuracy(const Ensemble& e, const Dataset& data) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.n; ++i) correct += e.predict(data.row(i)) == data.labels[i];
  return data.n ? static_cast<double>(correct) / static_cast<double>(data.n) : 0.0;
}

BoostReport samme_train(const Dataset& data, int rounds, std::uint64_t /*seed*/,
                        const SammeOptions& options) {
  if (rounds < 1) throw ParameterError("samme_train: need at least one round");
  data.validate();
  if (data.n == 0) throw ContractError("samme_train: empty dataset");
  BoostReport report;
  report.ensemble.num_classes = data.num_classes;
  std::vector<double> w(data.n, 1.0 / static_cast<double>(data.n));
  for (int m = 1; m <= rounds; ++m) {
    SammeRound r = samme_round(data, w, options);
    if (r.rejected) {
      report.stopped_early = true;
      report.stop_reason = "round " + std::to_string(m) + ": weighted error " +
                           std::to_string(r.epsilon) + " is no better than chance";
      break;
    }
    report.ensemble.stumps.push_back(r.stump);
    report.ensemble.etas.push_back(r.eta);
    w = std::move(r.new_weights);

    BoostRoundLog log;
    log.round = m;
    log.epsilon = r.epsilon;
    log.eta = r.eta;
    log.train_acc = ensemble_accuracy(report.ensemble, data);
    const auto margins = ensemble_margins(report.ensemble, data);
    log.mean_margin = std::accumulate(margins.begin(), margins.end(), 0.0) /
                      static_cast<double>(margins.size());
    log.min_weight = *std::min_element(w.begin(), w.end());
    log.weight_sum_error = std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0);
    report.rounds.push_back(log);
  }
  return report;
}

}  // namespace penex
