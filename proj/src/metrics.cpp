#include "penex/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "penex/errors.hpp"
#include "penex/random.hpp"

namespace penex {
namespace {

void check_probs(const Tensor& probs, std::span<const int> labels, const char* what) {
  if (probs.rank() != 2) throw DimensionError(std::string(what) + ": probabilities must be n x K");
  const std::size_t n = probs.rows(), k = probs.cols();
  if (labels.size() != n) throw DimensionError(std::string(what) + ": label count mismatch");
  const auto p = probs.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw IndexError(std::string(what) + ": label out of range at row " + std::to_string(i));
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += p[i * k + j];
    if (std::abs(s - 1.0) > 1e-6)
      throw ContractError(std::string(what) + ": row " + std::to_string(i) +
                          " is not a probability vector");
  }
}

}  // namespace

std::vector<int> argmax_rows(const Tensor& scores) {
  const std::size_t n = scores.rows(), k = scores.cols();
  const auto s = scores.data();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (s[i * k + j] > s[i * k + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const Tensor& probs, std::span<const int> labels) {
  check_probs(probs, labels, "accuracy");
  const auto pred = argmax_rows(probs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double ece(const Tensor& probs, std::span<const int> labels, int bins) {
  if (bins < 1) throw ParameterError("ece: need at least one bin");
  check_probs(probs, labels, "ece");
  const std::size_t n = probs.rows(), k = probs.cols();
  const auto pred = argmax_rows(probs);
  const auto p = probs.data();
  const auto m = static_cast<std::size_t>(bins);
  std::vector<double> conf_sum(m, 0.0), correct(m, 0.0);
  std::vector<std::size_t> count(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double conf = p[i * k + static_cast<std::size_t>(pred[i])];
    // bin b (1-based) holds conf in ((b-1)/M, b/M]; nudge the ceil() guess
    // so the edges agree with that comparison exactly.
    auto b = static_cast<std::size_t>(std::clamp(std::ceil(conf * bins), 1.0, double(bins)));
    while (b > 1 && conf <= static_cast<double>(b - 1) / bins) --b;
    while (b < m && conf > static_cast<double>(b) / bins) ++b;
    conf_sum[b - 1] += conf;
    correct[b - 1] += pred[i] == labels[i] ? 1.0 : 0.0;
    ++count[b - 1];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < m; ++b) {
    if (count[b] == 0) continue;
    const double c = static_cast<double>(count[b]);
    total += (c / static_cast<double>(n)) * std::abs(correct[b] / c - conf_sum[b] / c);
  }
  return total;
}

double brier(const Tensor& probs, std::span<const int> labels) {
  check_probs(probs, labels, "brier");
  const std::size_t n = probs.rows(), k = probs.cols();
  const auto p = probs.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double diff = p[i * k + j] - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0);
      total += diff * diff;
    }
  return total / static_cast<double>(n);
}

double eval_ce(const Tensor& probs, std::span<const int> labels, bool* saturated) {
  check_probs(probs, labels, "eval_ce");
  const std::size_t n = probs.rows(), k = probs.cols();
  const auto p = probs.data();
  bool clamped = false;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double py = p[i * k + static_cast<std::size_t>(labels[i])];
    if (py < kProbFloor) {
      py = kProbFloor;
      clamped = true;
    }
    total -= std::log(py);
  }
  if (saturated) *saturated = clamped;
  return total / static_cast<double>(n);
}

MarginQuantiles margin_quantiles(std::span<const double> margins) {
  MarginQuantiles q;
  if (margins.empty()) return q;
  std::vector<double> s(margins.begin(), margins.end());
  std::sort(s.begin(), s.end());
  auto at = [&](double level) {
    const double pos = level * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return s[lo] + frac * (s[hi] - s[lo]);
  };
  q.p05 = at(0.05);
  q.p25 = at(0.25);
  q.p50 = at(0.50);
  q.p75 = at(0.75);
  q.p95 = at(0.95);
  return q;
}

MetricsReport evaluate_metrics(const Tensor& probs, std::span<const double> margins,
                               std::span<const int> labels) {
  MetricsReport r;
  r.n = labels.size();
  r.acc = accuracy(probs, labels);
  r.ece = ece(probs, labels);
  r.brier = brier(probs, labels);
  r.ce = eval_ce(probs, labels, &r.ce_saturated);
  double s = 0.0;
  for (double m : margins) s += m;
  r.mean_margin = margins.empty() ? 0.0 : s / static_cast<double>(margins.size());
  r.margin_quantiles = margin_quantiles(margins);
  return r;
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty() || bins == 0) return h;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  h.lo = *mn;
  h.hi = *mx;
  const double width = (h.hi - h.lo) / static_cast<double>(bins);
  for (double v : values) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((v - h.lo) / width) : 0;
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

std::pair<double, double> bootstrap_mean_ci(std::span<const double> values, int resamples,
                                            double level, std::uint64_t seed) {
  if (values.empty() || resamples < 1) throw ParameterError("bootstrap: empty input");
  if (!(level > 0.0 && level < 1.0)) throw ParameterError("bootstrap: level must lie in (0, 1)");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(means.size() - 1)));
    return means[idx];
  };
  return {at(tail), at(1.0 - tail)};
}

}  // namespace penex
