#include "penex/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "penex/errors.hpp"
#include "penex/io.hpp"
#include "penex/random.hpp"

namespace penex {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kBlobs: return "blobs";
    case Provenance::kRings: return "rings";
    case Provenance::kCategoricalSingleX: return "categorical_single_x";
    case Provenance::kCsv: return "csv";
  }
  return "unknown";
}

void Dataset::validate() const {
  if (features.size() != n * d) throw DimensionError("dataset: features do not match n x d");
  if (labels.size() != n) throw DimensionError("dataset: label count does not match n");
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw IndexError("dataset: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
}

Tensor Dataset::feature_tensor() const { return Tensor::matrix(n, d, features); }

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out = *this;
  out.n = indices.size();
  out.features.resize(out.n * d);
  out.labels.resize(out.n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= n) throw IndexError("dataset subset: row index out of range");
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                out.features.begin() + static_cast<std::ptrdiff_t>(r * d));
    out.labels[r] = labels[i];
  }
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Dataset gen_blobs(std::size_t n, int num_classes, std::size_t d, double spread,
                  std::uint64_t seed) {
  if (num_classes < 1) throw ParameterError("gen_blobs: need at least one class");
  if (n < static_cast<std::size_t>(num_classes)) throw ParameterError("gen_blobs: n < K");
  if (d < 2) throw ParameterError("gen_blobs: d must be at least 2");
  if (!(spread >= 0.0)) throw ParameterError("gen_blobs: spread must be nonnegative");
  Dataset out{n, d, std::vector<double>(n * d, 0.0), Labels(n), num_classes,
              Provenance::kBlobs, seed};
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    const double angle = 2.0 * std::numbers::pi * y / num_classes;
    out.labels[i] = y;
    double* x = out.features.data() + i * d;
    x[0] = std::cos(angle);
    x[1] = std::sin(angle);
    for (std::size_t j = 0; j < d; ++j) x[j] += spread * noise(rng);
  }
  return out;
}

Dataset gen_rings(std::size_t n, int num_classes, double noise, std::uint64_t seed) {
  if (num_classes < 1) throw ParameterError("gen_rings: need at least one class");
  if (n < static_cast<std::size_t>(num_classes)) throw ParameterError("gen_rings: n < K");
  Dataset out{n, 2, std::vector<double>(n * 2), Labels(n), num_classes, Provenance::kRings, seed};
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> radial(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    const double r = (y + 1) + noise * radial(rng);
    const double a = angle(rng);
    out.labels[i] = y;
    out.features[2 * i] = r * std::cos(a);
    out.features[2 * i + 1] = r * std::sin(a);
  }
  return out;
}

Dataset gen_categorical_single_x(std::span<const double> probs, std::size_t n,
                                 std::uint64_t seed, std::size_t d) {
  if (probs.empty()) throw ParameterError("gen_categorical_single_x: empty distribution");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ParameterError("gen_categorical_single_x: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ParameterError("gen_categorical_single_x: probabilities must sum to 1");
  Dataset out{n, d, std::vector<double>(n * d, 1.0), Labels(n), static_cast<int>(probs.size()),
              Provenance::kCategoricalSingleX, seed};
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = u(rng) * total;
    double acc = 0.0;
    int y = static_cast<int>(probs.size()) - 1;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (r < acc) {
        y = static_cast<int>(k);
        break;
      }
    }
    // r can only reach the tail through rounding; never emit a zero-mass class.
    while (probs[static_cast<std::size_t>(y)] == 0.0 && y > 0) --y;
    out.labels[i] = y;
  }
  return out;
}

namespace {

// First `count` entries become a uniform sample without replacement.
std::vector<std::size_t> partial_shuffle(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count && i + 1 < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  return idx;
}

}  // namespace

Dataset flip_labels(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ParameterError("flip_labels: fraction must lie in [0, 1]");
  Dataset out = data;
  if (data.num_classes < 2) return out;
  const auto count = static_cast<std::size_t>(std::floor(fraction * data.n + 1e-9));
  Rng rng(seed);
  const auto idx = partial_shuffle(data.n, count, rng);
  std::uniform_int_distribution<int> other(0, data.num_classes - 2);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t i = idx[r];
    const int draw = other(rng);
    out.labels[i] = draw < data.labels[i] ? draw : draw + 1;
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0))
    throw ParameterError("split: train_ratio must lie in (0, 1)");
  Rng rng(seed);
  const auto idx = partial_shuffle(data.n, data.n, rng);
  const auto n_train = std::min(
      data.n, static_cast<std::size_t>(std::ceil(train_ratio * static_cast<double>(data.n) - 1e-9)));
  std::span<const std::size_t> all(idx);
  return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, bool standardize,
                 std::vector<std::string>* warnings) {
  const std::string text = io::read_text_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError("empty CSV file '" + path.string() + "'", 1);
  ++line_no;
  const auto header = split_fields(trim(line));
  if (header.size() < 2 || trim(header.back()) != "label")
    throw ParseError("CSV header must be f0,...,f{d-1},label", line_no);
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j)
    if (trim(header[j]) != "f" + std::to_string(j))
      throw ParseError("CSV header column " + std::to_string(j) + " must be f" +
                           std::to_string(j),
                       line_no);

  Dataset out;
  out.d = d;
  out.provenance = Provenance::kCsv;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim(line);
    if (row.empty()) continue;
    const auto fields = split_fields(row);
    if (fields.size() != d + 1)
      throw ParseError("expected " + std::to_string(d + 1) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    for (std::size_t j = 0; j < d; ++j) {
      const auto f = trim(fields[j]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v))
        throw ParseError("malformed number '" + std::string(f) + "'", line_no);
      out.features.push_back(v);
    }
    const auto lf = trim(fields[d]);
    int y = 0;
    const auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), y);
    if (ec != std::errc{} || ptr != lf.data() + lf.size() || y < 0)
      throw ParseError("label must be a nonnegative integer, got '" + std::string(lf) + "'",
                       line_no);
    out.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  out.n = out.labels.size();
  out.num_classes = max_label + 1;
  std::vector<bool> seen(static_cast<std::size_t>(out.num_classes), false);
  for (int y : out.labels) seen[static_cast<std::size_t>(y)] = true;
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (!seen[k] && warnings)
      warnings->push_back("label " + std::to_string(k) + " never occurs in '" + path.string() +
                          "'; K set to " + std::to_string(out.num_classes));
  if (standardize) standardize_columns(out);
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::string text;
  for (std::size_t j = 0; j < data.d; ++j) text += "f" + std::to_string(j) + ",";
  text += "label\n";
  for (std::size_t i = 0; i < data.n; ++i) {
    for (std::size_t j = 0; j < data.d; ++j) text += io::format_double(data.features[i * data.d + j]) + ",";
    text += std::to_string(data.labels[i]) + "\n";
  }
  io::write_text_file(path, text);
}

void standardize_columns(Dataset& data) {
  if (data.n == 0) return;
  for (std::size_t j = 0; j < data.d; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) mu += data.features[i * data.d + j];
    mu /= static_cast<double>(data.n);
    double var = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
      const double c = data.features[i * data.d + j] - mu;
      var += c * c;
    }
    const double sd = std::sqrt(var / static_cast<double>(data.n));
    for (std::size_t i = 0; i < data.n; ++i) {
      double& v = data.features[i * data.d + j];
      v = sd > 0.0 ? (v - mu) / sd : v - mu;
    }
  }
}

}  // namespace penex
